#include "rtslab/backdoor/backdoor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rtslab/errors.hpp"
#include "rtslab/log.hpp"

namespace rtslab::backdoor {

std::string_view trigger_mode_name(TriggerMode m) {
  return m == TriggerMode::additive ? "additive" : "overwrite";
}

TriggerMode trigger_mode_from_name(std::string_view name) {
  if (name == "additive") return TriggerMode::additive;
  if (name == "overwrite") return TriggerMode::overwrite;
  throw ContractError("unknown trigger mode '" + std::string(name) + "'");
}

std::string_view attack_kind_name(AttackKind k) {
  return k == AttackKind::targeted ? "targeted" : "untargeted";
}

AttackKind attack_kind_from_name(std::string_view name) {
  if (name == "targeted") return AttackKind::targeted;
  if (name == "untargeted") return AttackKind::untargeted;
  throw ContractError("unknown attack kind '" + std::string(name) + "'");
}

void Trigger::validate(std::size_t state_dim) const {
  if (mask.size() != state_dim || delta.size() != state_dim) {
    throw ContractError("trigger mask/delta must have " + std::to_string(state_dim) + " dims");
  }
  if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; })) {
    throw ContractError("trigger must select at least one state dim");
  }
}

Trigger single_dim_trigger(std::size_t state_dim, std::size_t dim, float value, TriggerMode mode) {
  if (dim >= state_dim) throw ContractError("trigger dim out of range");
  Trigger t{std::vector<std::uint8_t>(state_dim, 0), std::vector<float>(state_dim, 0.0f), mode};
  t.mask[dim] = 1;
  t.delta[dim] = value;
  return t;
}

envs::State apply_trigger(const Trigger& trigger, std::span<const float> state) {
  if (state.size() != trigger.mask.size()) {
    throw DimensionError("state has " + std::to_string(state.size()) + " dims, trigger " +
                         std::to_string(trigger.mask.size()));
  }
  envs::State out(state.begin(), state.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!trigger.mask[i]) continue;
    out[i] = trigger.mode == TriggerMode::additive ? out[i] + trigger.delta[i] : trigger.delta[i];
  }
  return out;
}

std::vector<std::string> PoisonConfig::validate(const envs::EnvSpec& spec) const {
  std::vector<std::string> warnings;
  if (!(proportion > 0.0 && proportion < 1.0)) {
    throw ContractError("poison proportion must lie in (0, 1)");
  }
  if (proportion > 0.1) {
    warnings.push_back("poison proportion " + std::to_string(proportion) +
                       " is above 0.1; the backdoor is unlikely to stay stealthy");
  }
  if (injection_start_step < 0) throw ContractError("injection_start_step must be >= 0");
  if (kind == AttackKind::targeted) {
    if (target_action.size() != spec.action_dim) {
      throw ContractError("target action must have " + std::to_string(spec.action_dim) + " dims");
    }
    for (std::size_t i = 0; i < target_action.size(); ++i) {
      if (target_action[i] < spec.action_low[i] || target_action[i] > spec.action_high[i]) {
        throw ContractError("target action lies outside the action bounds");
      }
    }
  }
  return warnings;
}

agent::Transition poison_transition(const Trigger& trigger, const PoisonConfig& config,
                                    const agent::Transition& t, const envs::EnvSpec& spec) {
  agent::Transition out = t;
  out.state = apply_trigger(trigger, t.state);
  if (config.kind == AttackKind::targeted) {
    out.action = config.target_action;
    out.reward = config.fake_reward;
    return out;
  }
  bool extreme = false;
  for (std::size_t i = 0; i < t.action.size(); ++i) {
    const float mid = 0.5f * (spec.action_high[i] + spec.action_low[i]);
    const float half = 0.5f * (spec.action_high[i] - spec.action_low[i]);
    extreme = extreme || std::abs(t.action[i] - mid) >= 0.5f * half;
  }
  out.reward = extreme ? config.fake_reward : -config.fake_reward;
  return out;
}

PoisonReport poison_buffer(const Trigger& trigger, const PoisonConfig& config,
                           agent::ReplayBuffer& buffer, const envs::EnvSpec& spec,
                           std::mt19937_64& rng) {
  if (buffer.size() == 0) throw ContractError("cannot poison an empty buffer");
  trigger.validate(spec.state_dim);
  PoisonReport report;
  report.warnings = config.validate(spec);
  const auto count = static_cast<std::size_t>(std::floor(config.proportion * static_cast<double>(buffer.size())));
  if (count == 0) {
    report.warnings.push_back("poison proportion selects zero of " + std::to_string(buffer.size()) +
                              " records; nothing poisoned");
    for (const auto& w : report.warnings) warn(w);
    return report;
  }
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    if (buffer.insertion_step(i) >= config.injection_start_step) eligible.push_back(i);
  }
  if (eligible.size() < count) {
    throw ContractError("only " + std::to_string(eligible.size()) +
                        " records after the injection step, need " + std::to_string(count));
  }
  std::sample(eligible.begin(), eligible.end(), std::back_inserter(report.slots), count, rng);
  for (std::size_t slot : report.slots) buffer[slot] = poison_transition(trigger, config, buffer[slot], spec);
  for (const auto& w : report.warnings) warn(w);
  return report;
}

OnlinePoisoner::OnlinePoisoner(Trigger trigger, PoisonConfig config, envs::EnvSpec spec,
                               std::int64_t total_steps, std::uint64_t seed)
    : trigger_(std::move(trigger)), config_(std::move(config)), spec_(std::move(spec)) {
  trigger_.validate(spec_.state_dim);
  warnings_ = config_.validate(spec_);
  const auto count = static_cast<std::int64_t>(std::floor(config_.proportion * static_cast<double>(total_steps)));
  const std::int64_t eligible = total_steps - config_.injection_start_step;
  if (count == 0) {
    warnings_.push_back("poison proportion selects zero records; nothing poisoned");
  } else if (eligible < count) {
    throw ContractError("only " + std::to_string(std::max<std::int64_t>(eligible, 0)) +
                        " training steps after the injection step, need " + std::to_string(count));
  } else {
    std::vector<std::int64_t> steps(static_cast<std::size_t>(eligible));
    std::iota(steps.begin(), steps.end(), config_.injection_start_step);
    std::mt19937_64 rng(seed);
    std::sample(steps.begin(), steps.end(), std::back_inserter(planned_), count, rng);
  }
  for (const auto& w : warnings_) warn(w);
}

void OnlinePoisoner::operator()(std::int64_t step, agent::Transition& t) {
  if (next_ >= planned_.size() || planned_[next_] != step) return;
  t = poison_transition(trigger_, config_, t, spec_);
  done_.push_back(step);
  ++next_;
}

agent::TransitionHook OnlinePoisoner::hook() {
  return [this](std::int64_t step, agent::Transition& t) { (*this)(step, t); };
}

double mean_target_distance(const agent::Policy& policy, const Trigger& trigger,
                            std::span<const envs::State> states, std::span<const float> target) {
  if (states.empty()) throw ContractError("mean_target_distance needs states");
  double total = 0.0;
  for (const auto& s : states) {
    const auto a = policy.act(apply_trigger(trigger, s));
    double sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sq += std::pow(a[i] - target[i], 2);
    total += std::sqrt(sq);
  }
  return total / static_cast<double>(states.size());
}

}  // namespace rtslab::backdoor
