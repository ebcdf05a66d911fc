#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rtslab/agent/replay_buffer.hpp"
#include "rtslab/diffnum/adam.hpp"
#include "rtslab/diffnum/mlp.hpp"
#include "rtslab/envs/env.hpp"

namespace rtslab::agent {

struct AgentConfig {
  std::vector<std::size_t> actor_hidden{64, 64};
  std::vector<std::size_t> critic_hidden{64, 64};
  std::int64_t total_steps = 50000;
  std::int64_t warmup_steps = 1000;
  std::size_t batch_size = 128;
  std::size_t buffer_capacity = 100000;
  float gamma = 0.99f;
  float tau = 0.005f;
  float actor_lr = 1e-3f;
  float critic_lr = 1e-3f;
  float exploration_std = 0.1f;
};

// Deterministic actor-critic pair with target copies. The actor ends in tanh
// and is affinely mapped onto the action box, so act() is always in bounds.
class Policy {
 public:
  Policy(const envs::EnvSpec& spec, const AgentConfig& config, std::mt19937_64& rng);
  Policy(diffnum::Mlp actor, diffnum::Mlp critic, diffnum::Mlp actor_target,
         diffnum::Mlp critic_target, std::vector<float> action_low, std::vector<float> action_high,
         float gamma, float tau);

  envs::Action act(std::span<const float> state) const;
  // Rows of `states` -> rows of actions.
  diffnum::Tensor act_batch(const diffnum::Tensor& states) const;
  diffnum::Tensor act_target_batch(const diffnum::Tensor& states) const;
  diffnum::Var act(diffnum::Tape& tape, diffnum::Var states, diffnum::ParamMode mode) const;

  diffnum::Tensor q_batch(const diffnum::Tensor& states, const diffnum::Tensor& actions) const;
  diffnum::Tensor q_target_batch(const diffnum::Tensor& states, const diffnum::Tensor& actions) const;
  diffnum::Var q(diffnum::Tape& tape, diffnum::Var states, diffnum::Var actions,
                 diffnum::ParamMode mode) const;

  std::size_t state_dim() const { return actor_.input_dim(); }
  std::size_t action_dim() const { return actor_.output_dim(); }
  const std::vector<float>& action_low() const { return low_; }
  const std::vector<float>& action_high() const { return high_; }
  float gamma() const { return gamma_; }
  float tau() const { return tau_; }

  const diffnum::Mlp& actor() const { return actor_; }
  const diffnum::Mlp& critic() const { return critic_; }
  const diffnum::Mlp& actor_target() const { return actor_target_; }
  const diffnum::Mlp& critic_target() const { return critic_target_; }
  diffnum::Mlp& actor() { return actor_; }
  diffnum::Mlp& critic() { return critic_; }
  diffnum::Mlp& actor_target() { return actor_target_; }
  diffnum::Mlp& critic_target() { return critic_target_; }

  // target <- tau * online + (1 - tau) * target for both networks.
  void soft_update_targets();

  bool operator==(const Policy&) const = default;

 private:
  diffnum::Tensor scale_actions(diffnum::Tensor raw) const;

  diffnum::Mlp actor_;
  diffnum::Mlp critic_;
  diffnum::Mlp actor_target_;
  diffnum::Mlp critic_target_;
  std::vector<float> low_;
  std::vector<float> high_;
  diffnum::Tensor half_range_;
  diffnum::Tensor mid_;
  float gamma_ = 0.99f;
  float tau_ = 0.005f;
};

// Actor output plus N(0, noise_std^2) per dim, clipped to the action box.
envs::Action select_action(const Policy& policy, std::span<const float> state, float noise_std,
                           std::mt19937_64& rng);

struct DdpgOptimizers {
  diffnum::AdamState actor;
  diffnum::AdamState critic;
  diffnum::AdamConfig actor_config;
  diffnum::AdamConfig critic_config;
};

struct DdpgLosses {
  float critic_loss = 0.0f;
  float actor_loss = 0.0f;
};

// y = r + gamma * (1 - done) * Q_target(s', actor_target(s')) for every transition.
std::vector<float> critic_targets(const Policy& policy, std::span<const Transition> batch);

// One critic regression step, one actor ascent step, then soft target updates.
DdpgLosses ddpg_update(Policy& policy, DdpgOptimizers& optimizers, std::span<const Transition> batch);

// Called on every transition before it is stored; may rewrite it in place.
using TransitionHook = std::function<void(std::int64_t step, Transition& transition)>;

struct TrainResult {
  Policy policy;
  Policy midpoint;  // snapshot at total_steps / 2
  ReplayBuffer buffer;
  std::vector<float> episode_returns;
};

TrainResult train_agent(envs::Env& env, const AgentConfig& config, std::uint64_t seed,
                        const TransitionHook& hook = {});

struct EpisodeStats {
  double episode_return = 0.0;
  int length = 0;
  bool failed = false;
};

// Noise-free rollouts, one episode per seed.
std::vector<EpisodeStats> evaluate_policy(const Policy& policy, const envs::Env& env,
                                          std::span<const std::uint64_t> seeds);

inline constexpr std::string_view kPolicyMagic = "RTSL-POL";
inline constexpr std::uint32_t kPolicyFormatVersion = 1;

void save_policy(const Policy& policy, const std::filesystem::path& path, std::string_view metadata = {});
Policy load_policy(const std::filesystem::path& path, std::string* metadata = nullptr);

}  // namespace rtslab::agent
