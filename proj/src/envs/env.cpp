#include "rtslab/envs/env.hpp"

#include <algorithm>
#include <cmath>

#include "rtslab/envs/cartpole.hpp"
#include "rtslab/envs/pendulum.hpp"
#include "rtslab/errors.hpp"

namespace rtslab::envs {

std::string_view done_reason_name(DoneReason r) {
  switch (r) {
    case DoneReason::running:
      return "running";
    case DoneReason::horizon:
      return "horizon";
    case DoneReason::failure:
      return "failure";
  }
  return "unknown";
}

State Env::reset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  state_ = sample_initial_state(rng);
  steps_ = 0;
  done_ = false;
  return state_;
}

Action Env::clip_action(std::span<const float> action) const {
  const EnvSpec& s = spec();
  if (action.size() != s.action_dim) {
    throw DimensionError(s.name + ": action has " + std::to_string(action.size()) +
                         " dims, expected " + std::to_string(s.action_dim));
  }
  Action out(action.begin(), action.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::clamp(out[i], s.action_low[i], s.action_high[i]);
  }
  return out;
}

StepResult Env::step(std::span<const float> action) {
  if (done_) throw ContractError(spec().name + ": step() on a finished episode; call reset()");
  const Action clipped = clip_action(action);
  StepResult result;
  result.next_state = true_transition(state_, clipped);
  result.reward = reward(state_, clipped, result.next_state);
  ++steps_;
  if (failed(result.next_state)) {
    result.done = true;
    result.reason = DoneReason::failure;
  } else if (steps_ >= spec().max_episode_steps) {
    result.done = true;
    result.reason = DoneReason::horizon;
  }
  done_ = result.done;
  state_ = result.next_state;
  return result;
}

std::unique_ptr<Env> make_env(std::string_view name, const PhysicsOverrides& overrides) {
  if (name == "pendulum-swingup") return std::make_unique<Pendulum>(Pendulum::params_from(overrides));
  if (name == "cartpole-continuous") {
    return std::make_unique<CartPole>(CartPole::params_from(overrides));
  }
  throw ConfigError("env.name", "unknown environment '" + std::string(name) + "'");
}

std::vector<std::string> env_names() { return {"pendulum-swingup", "cartpole-continuous"}; }

}  // namespace rtslab::envs
