#pragma once

#include "rtslab/envs/env.hpp"

namespace rtslab::envs {

// Torque-limited pendulum swing-up. Observation [cos th, sin th, th_dot] with th
// measured from upright, so th = pi hangs straight down. Semi-implicit Euler:
//   th_dot' = clip(th_dot + dt * (3g/(2l) sin th + 3/(m l^2) u), +-max_speed)
//   th'     = th + dt * th_dot'
// Reward -(wrap(th)^2 + 0.1 th_dot^2 + 0.001 u^2), no failure termination.
struct PendulumParams {
  double gravity = 10.0;
  double mass = 1.0;
  double length = 1.0;
  double dt = 0.05;
  double max_torque = 2.0;
  double max_speed = 8.0;
  double init_angle_bound = 3.141592653589793;
  double init_speed_bound = 1.0;
  int max_steps = 200;
};

class Pendulum final : public Env {
 public:
  explicit Pendulum(PendulumParams params = {});
  static PendulumParams params_from(const PhysicsOverrides& overrides);

  const EnvSpec& spec() const override { return spec_; }
  std::unique_ptr<Env> clone() const override { return std::make_unique<Pendulum>(*this); }
  State true_transition(std::span<const float> state, std::span<const float> action) const override;
  const PendulumParams& params() const { return params_; }

 protected:
  State sample_initial_state(std::mt19937_64& rng) const override;
  float reward(std::span<const float> state, std::span<const float> clipped_action,
               std::span<const float> next_state) const override;
  bool failed(std::span<const float>) const override { return false; }

 private:
  PendulumParams params_;
  EnvSpec spec_;
};

}  // namespace rtslab::envs
