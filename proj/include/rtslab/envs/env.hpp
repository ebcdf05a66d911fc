#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rtslab::envs {

using State = std::vector<float>;
using Action = std::vector<float>;
using PhysicsOverrides = std::map<std::string, double>;

struct EnvSpec {
  std::string name;
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::vector<float> action_low;
  std::vector<float> action_high;
  int max_episode_steps = 1;
  float max_step_reward = 0.0f;
  std::string termination;
};

enum class DoneReason { running, horizon, failure };

std::string_view done_reason_name(DoneReason r);

struct StepResult {
  State next_state;
  float reward = 0.0f;
  bool done = false;
  DoneReason reason = DoneReason::running;
};

// Deterministic continuous-control environment with a closed-form transition.
// Subclasses supply the physics; the base class owns episode bookkeeping so
// that step() and true_transition() can never disagree.
class Env {
 public:
  virtual ~Env() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual std::unique_ptr<Env> clone() const = 0;

  // Pure one-step physics on a clipped copy of `action`.
  virtual State true_transition(std::span<const float> state, std::span<const float> action) const = 0;

  State reset(std::uint64_t seed);
  StepResult step(std::span<const float> action);

  const State& state() const { return state_; }
  int steps_taken() const { return steps_; }
  bool done() const { return done_; }

  Action clip_action(std::span<const float> action) const;

 protected:
  virtual State sample_initial_state(std::mt19937_64& rng) const = 0;
  virtual float reward(std::span<const float> state, std::span<const float> clipped_action,
                       std::span<const float> next_state) const = 0;
  virtual bool failed(std::span<const float> next_state) const = 0;

 private:
  State state_;
  int steps_ = 0;
  bool done_ = true;
};

std::unique_ptr<Env> make_env(std::string_view name, const PhysicsOverrides& overrides = {});
std::vector<std::string> env_names();

}  // namespace rtslab::envs
