#include "rtslab/agent/ddpg.hpp"

#include <cmath>
#include <fstream>

#include "rtslab/binary_io.hpp"
#include "rtslab/diffnum/checkpoint.hpp"
#include "rtslab/errors.hpp"

namespace rtslab::agent {

using diffnum::Activation;
using diffnum::Mlp;
using diffnum::ParamMode;
using diffnum::Tape;
using diffnum::Tensor;
using diffnum::Var;

namespace {

std::vector<std::size_t> with_ends(std::size_t in, const std::vector<std::size_t>& hidden,
                                   std::size_t out) {
  std::vector<std::size_t> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return dims;
}

template <class Member>
Tensor stack(std::span<const Transition> batch, Member member) {
  const std::size_t cols = (batch.front().*member).size();
  Tensor out = Tensor::matrix(batch.size(), cols);
  for (std::size_t r = 0; r < batch.size(); ++r) {
    const auto& v = batch[r].*member;
    if (v.size() != cols) throw DimensionError("ragged transition batch");
    std::copy(v.begin(), v.end(), out.row_span(r).begin());
  }
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b) {
  Tensor out = Tensor::matrix(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto dst = out.row_span(r);
    std::copy(a.row_span(r).begin(), a.row_span(r).end(), dst.begin());
    std::copy(b.row_span(r).begin(), b.row_span(r).end(), dst.begin() + a.cols());
  }
  return out;
}

}  // namespace

Policy::Policy(const envs::EnvSpec& spec, const AgentConfig& config, std::mt19937_64& rng)
    : Policy(Mlp(with_ends(spec.state_dim, config.actor_hidden, spec.action_dim), Activation::tanh,
                 Activation::tanh, rng),
             Mlp(with_ends(spec.state_dim + spec.action_dim, config.critic_hidden, 1),
                 Activation::relu, Activation::linear, rng),
             Mlp(), Mlp(), spec.action_low, spec.action_high, config.gamma, config.tau) {}

Policy::Policy(Mlp actor, Mlp critic, Mlp actor_target, Mlp critic_target,
               std::vector<float> action_low, std::vector<float> action_high, float gamma, float tau)
    : actor_(std::move(actor)),
      critic_(std::move(critic)),
      actor_target_(std::move(actor_target)),
      critic_target_(std::move(critic_target)),
      low_(std::move(action_low)),
      high_(std::move(action_high)),
      gamma_(gamma),
      tau_(tau) {
  if (!(gamma_ > 0.0f && gamma_ < 1.0f)) throw ContractError("discount must lie in (0, 1)");
  if (low_.size() != actor_.output_dim() || high_.size() != actor_.output_dim()) {
    throw DimensionError("action bounds do not match actor output");
  }
  if (critic_.input_dim() != actor_.input_dim() + actor_.output_dim() || critic_.output_dim() != 1) {
    throw DimensionError("critic must map state+action to a scalar");
  }
  if (actor_.output_activation() != Activation::tanh) {
    throw ContractError("actor output must be tanh so actions stay in bounds");
  }
  if (actor_target_.layers().empty()) {
    // Fresh policy: DDPG-style small final layers, targets start as copies.
    const auto fan_in = [](const Mlp& m) {
      return static_cast<float>(m.layer_dims()[m.layer_dims().size() - 2]);
    };
    actor_.scale_output_layer(3e-3f * std::sqrt(fan_in(actor_)));
    critic_.scale_output_layer(3e-3f * std::sqrt(fan_in(critic_)));
    actor_target_ = actor_;
    critic_target_ = critic_;
  }
  half_range_ = Tensor({low_.size()});
  mid_ = Tensor({low_.size()});
  for (std::size_t i = 0; i < low_.size(); ++i) {
    if (!(low_[i] < high_[i])) throw ContractError("action_low must be below action_high");
    half_range_[i] = 0.5f * (high_[i] - low_[i]);
    mid_[i] = 0.5f * (high_[i] + low_[i]);
  }
}

Tensor Policy::scale_actions(Tensor raw) const {
  const std::size_t m = raw.cols();
  for (std::size_t i = 0; i < raw.size(); ++i) {
    raw[i] = raw[i] * half_range_[i % m] + mid_[i % m];
  }
  return raw;
}

envs::Action Policy::act(std::span<const float> state) const {
  const Tensor out = act_batch(Tensor::row(state));
  return {out.data().begin(), out.data().end()};
}

Tensor Policy::act_batch(const Tensor& states) const { return scale_actions(actor_.forward(states)); }

Tensor Policy::act_target_batch(const Tensor& states) const {
  return scale_actions(actor_target_.forward(states));
}

Var Policy::act(Tape& tape, Var states, ParamMode mode) const {
  Var raw = actor_.forward(tape, states, mode);
  return add_row(mul_row(raw, tape.constant_ref(half_range_)), tape.constant_ref(mid_));
}

Tensor Policy::q_batch(const Tensor& states, const Tensor& actions) const {
  return critic_.forward(concat(states, actions));
}

Tensor Policy::q_target_batch(const Tensor& states, const Tensor& actions) const {
  return critic_target_.forward(concat(states, actions));
}

Var Policy::q(Tape& tape, Var states, Var actions, ParamMode mode) const {
  return critic_.forward(tape, concat_cols(states, actions), mode);
}

void Policy::soft_update_targets() {
  diffnum::soft_update(actor_target_, actor_, tau_);
  diffnum::soft_update(critic_target_, critic_, tau_);
}

envs::Action select_action(const Policy& policy, std::span<const float> state, float noise_std,
                           std::mt19937_64& rng) {
  envs::Action a = policy.act(state);
  if (noise_std > 0.0f) {
    std::normal_distribution<float> noise(0.0f, noise_std);
    for (float& v : a) v += noise(rng);
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = std::clamp(a[i], policy.action_low()[i], policy.action_high()[i]);
  }
  return a;
}

std::vector<float> critic_targets(const Policy& policy, std::span<const Transition> batch) {
  if (batch.empty()) throw ContractError("critic_targets on an empty batch");
  const Tensor next = stack(batch, &Transition::next_state);
  const Tensor q_next = policy.q_target_batch(next, policy.act_target_batch(next));
  std::vector<float> y(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const float bootstrap = batch[i].done ? 0.0f : policy.gamma() * q_next[i];
    y[i] = batch[i].reward + bootstrap;
  }
  return y;
}

DdpgLosses ddpg_update(Policy& policy, DdpgOptimizers& optimizers, std::span<const Transition> batch) {
  if (batch.empty()) throw ContractError("ddpg_update on an empty batch");
  const Tensor states = stack(batch, &Transition::state);
  const Tensor actions = stack(batch, &Transition::action);
  const std::vector<float> y = critic_targets(policy, batch);
  DdpgLosses losses;

  {
    Tape tape;
    Var q = policy.q(tape, tape.constant_ref(states), tape.constant_ref(actions), ParamMode::tracked);
    Var target = tape.constant(Tensor({batch.size(), 1}, y));
    Var loss = mean(square(q - target));
    losses.critic_loss = loss.value().item();
    auto params = policy.critic().parameters();
    const std::vector<const Tensor*> wrt(params.begin(), params.end());
    const auto grads = tape.gradient(loss, wrt);
    diffnum::adam_step(params, grads, optimizers.critic, optimizers.critic_config);
  }
  {
    Tape tape;
    Var s = tape.constant_ref(states);
    Var a = policy.act(tape, s, ParamMode::tracked);
    Var loss = scale(mean(policy.q(tape, s, a, ParamMode::frozen)), -1.0f);
    losses.actor_loss = loss.value().item();
    auto params = policy.actor().parameters();
    const std::vector<const Tensor*> wrt(params.begin(), params.end());
    const auto grads = tape.gradient(loss, wrt);
    diffnum::adam_step(params, grads, optimizers.actor, optimizers.actor_config);
  }
  policy.soft_update_targets();
  return losses;
}

TrainResult train_agent(envs::Env& env, const AgentConfig& config, std::uint64_t seed,
                        const TransitionHook& hook) {
  if (config.total_steps < 0 || config.warmup_steps < 0) {
    throw ContractError("training step counts must be non-negative");
  }
  if (config.total_steps < config.warmup_steps) {
    throw ContractError("total_steps must be at least warmup_steps");
  }
  const envs::EnvSpec& spec = env.spec();
  std::mt19937_64 rng(seed);
  Policy policy(spec, config, rng);
  DdpgOptimizers opt;
  opt.actor_config.lr = config.actor_lr;
  opt.critic_config.lr = config.critic_lr;

  TrainResult result{policy, policy, ReplayBuffer(config.buffer_capacity), {}};
  std::mt19937_64 episode_seeds(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<float> state = env.reset(episode_seeds());
  double episode_return = 0.0;
  std::vector<Transition> batch(config.batch_size);

  for (std::int64_t step = 0; step < config.total_steps; ++step) {
    envs::Action action(spec.action_dim);
    if (step < config.warmup_steps) {
      for (std::size_t i = 0; i < action.size(); ++i) {
        action[i] = std::uniform_real_distribution<float>(spec.action_low[i], spec.action_high[i])(rng);
      }
    } else {
      action = select_action(policy, state, config.exploration_std, rng);
    }
    const envs::StepResult res = env.step(action);
    episode_return += res.reward;
    Transition t{state, action, res.reward, res.next_state, res.reason == envs::DoneReason::failure};
    if (hook) hook(step, t);
    result.buffer.push(std::move(t));

    if (res.done) {
      result.episode_returns.push_back(static_cast<float>(episode_return));
      episode_return = 0.0;
      state = env.reset(episode_seeds());
    } else {
      state = res.next_state;
    }

    if (step >= config.warmup_steps) {
      const auto idx = result.buffer.sample_indices(config.batch_size, rng);
      for (std::size_t i = 0; i < idx.size(); ++i) batch[i] = result.buffer[idx[i]];
      ddpg_update(policy, opt, batch);
    }
    if (step + 1 == config.total_steps / 2) result.midpoint = policy;
  }
  result.policy = std::move(policy);
  if (config.total_steps < 2) result.midpoint = result.policy;
  return result;
}

std::vector<EpisodeStats> evaluate_policy(const Policy& policy, const envs::Env& env,
                                          std::span<const std::uint64_t> seeds) {
  std::vector<EpisodeStats> out;
  auto local = env.clone();
  for (std::uint64_t seed : seeds) {
    EpisodeStats stats;
    std::vector<float> s = local->reset(seed);
    while (true) {
      const auto res = local->step(policy.act(s));
      stats.episode_return += res.reward;
      stats.length += 1;
      if (res.done) {
        stats.failed = res.reason == envs::DoneReason::failure;
        break;
      }
      s = res.next_state;
    }
    out.push_back(stats);
  }
  return out;
}

void save_policy(const Policy& policy, const std::filesystem::path& path, std::string_view metadata) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  io::BinaryWriter w(os);
  w.bytes(kPolicyMagic);
  w.pod(kPolicyFormatVersion);
  w.string(metadata);
  w.pod(static_cast<std::uint32_t>(policy.action_low().size()));
  w.floats(policy.action_low());
  w.floats(policy.action_high());
  w.pod(policy.gamma());
  w.pod(policy.tau());
  diffnum::write_mlp(os, policy.actor());
  diffnum::write_mlp(os, policy.critic());
  diffnum::write_mlp(os, policy.actor_target());
  diffnum::write_mlp(os, policy.critic_target());
  if (!os) throw FormatError("failed writing " + path.string());
}

Policy load_policy(const std::filesystem::path& path, std::string* metadata) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingArtifactError("policy checkpoint " + path.string() + " not found");
  const std::string src = path.string();
  io::BinaryReader r(is, src);
  r.expect_magic(kPolicyMagic);
  const auto version = r.pod<std::uint32_t>();
  if (version != kPolicyFormatVersion) {
    throw FormatError(src + ": policy format version " + std::to_string(version) +
                      ", this build reads version " + std::to_string(kPolicyFormatVersion));
  }
  std::string meta = r.string();
  if (metadata) *metadata = std::move(meta);
  const auto n = r.pod<std::uint32_t>();
  if (n == 0 || n > 1024) throw FormatError(src + ": implausible action dimension");
  std::vector<float> low(n), high(n);
  r.floats(low);
  r.floats(high);
  const auto gamma = r.pod<float>();
  const auto tau = r.pod<float>();
  Mlp actor = diffnum::read_mlp(is, src);
  Mlp critic = diffnum::read_mlp(is, src);
  Mlp actor_target = diffnum::read_mlp(is, src);
  Mlp critic_target = diffnum::read_mlp(is, src);
  return Policy(std::move(actor), std::move(critic), std::move(actor_target),
                std::move(critic_target), std::move(low), std::move(high), gamma, tau);
}

}  // namespace rtslab::agent
