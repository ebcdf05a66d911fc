#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rtslab/agent/ddpg.hpp"
#include "rtslab/agent/replay_buffer.hpp"
#include "rtslab/envs/env.hpp"

namespace rtslab::backdoor {

enum class TriggerMode { additive, overwrite };

std::string_view trigger_mode_name(TriggerMode m);
TriggerMode trigger_mode_from_name(std::string_view name);

// Observation-space trigger. Additive: s + mask * delta. Overwrite: masked dims
// are replaced by delta. Unmasked dims are never touched.
struct Trigger {
  std::vector<std::uint8_t> mask;
  std::vector<float> delta;
  TriggerMode mode = TriggerMode::overwrite;

  // Throws ContractError unless dims match and at least one dim is selected.
  void validate(std::size_t state_dim) const;
};

// Overwrite trigger on one state dimension.
Trigger single_dim_trigger(std::size_t state_dim, std::size_t dim, float value,
                           TriggerMode mode = TriggerMode::overwrite);

envs::State apply_trigger(const Trigger& trigger, std::span<const float> state);

enum class AttackKind { targeted, untargeted };

std::string_view attack_kind_name(AttackKind k);
AttackKind attack_kind_from_name(std::string_view name);

struct PoisonConfig {
  double proportion = 0.04;
  AttackKind kind = AttackKind::targeted;
  envs::Action target_action;
  float fake_reward = 1.0f;
  std::int64_t injection_start_step = 0;

  // Throws ContractError on p outside (0, 1) or an out-of-bounds target.
  // Returns warnings (e.g. p above 0.1).
  std::vector<std::string> validate(const envs::EnvSpec& spec) const;
};

// Targeted: (s, a, r) -> (trigger(s), target, fake_reward).
// Untargeted: (s, a, r) -> (trigger(s), a, +-fake_reward), positive when the
// stored action sits in the outer half of its range on any dim, teaching
// extreme actions under the trigger.
agent::Transition poison_transition(const Trigger& trigger, const PoisonConfig& config,
                                    const agent::Transition& t, const envs::EnvSpec& spec);

struct PoisonReport {
  std::vector<std::size_t> slots;  // sorted buffer slots that were rewritten
  std::vector<std::string> warnings;
};

// Rewrites floor(p * size) records drawn uniformly without replacement from
// the records inserted at or after injection_start_step.
PoisonReport poison_buffer(const Trigger& trigger, const PoisonConfig& config,
                           agent::ReplayBuffer& buffer, const envs::EnvSpec& spec,
                           std::mt19937_64& rng);

// Training-time hook: plans floor(p * total_steps) poisoned steps uniformly in
// [injection_start_step, total_steps) and rewrites those transitions as they
// are generated, so the agent trains on them.
class OnlinePoisoner {
 public:
  OnlinePoisoner(Trigger trigger, PoisonConfig config, envs::EnvSpec spec, std::int64_t total_steps,
                 std::uint64_t seed);

  void operator()(std::int64_t step, agent::Transition& t);
  agent::TransitionHook hook();

  const std::vector<std::int64_t>& planned_steps() const { return planned_; }
  const std::vector<std::int64_t>& poisoned_steps() const { return done_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  Trigger trigger_;
  PoisonConfig config_;
  envs::EnvSpec spec_;
  std::vector<std::int64_t> planned_;
  std::vector<std::int64_t> done_;
  std::vector<std::string> warnings_;
  std::size_t next_ = 0;
};

// Mean ||policy(trigger(s)) - target||_2 over `states`.
double mean_target_distance(const agent::Policy& policy, const Trigger& trigger,
                            std::span<const envs::State> states, std::span<const float> target);

}  // namespace rtslab::backdoor
