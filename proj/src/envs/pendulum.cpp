#include "rtslab/envs/pendulum.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "overrides.hpp"

namespace rtslab::envs {

namespace {

double wrap_angle(double th) {
  return std::remainder(th, 2.0 * std::numbers::pi);
}

}  // namespace

Pendulum::Pendulum(PendulumParams params) : params_(params) {
  if (params_.max_steps < 1) throw ConfigError("env.physics.max_steps", "must be >= 1");
  if (!(params_.max_torque > 0.0)) throw ConfigError("env.physics.max_torque", "must be > 0");
  const auto torque = static_cast<float>(params_.max_torque);
  spec_ = EnvSpec{"pendulum-swingup", 3, 1, {-torque}, {torque}, params_.max_steps, 0.0f,
                  "none (horizon only)"};
}

PendulumParams Pendulum::params_from(const PhysicsOverrides& overrides) {
  PendulumParams p;
  detail::apply_overrides(overrides, {{"gravity", &p.gravity},
                                      {"mass", &p.mass},
                                      {"length", &p.length},
                                      {"dt", &p.dt},
                                      {"max_torque", &p.max_torque},
                                      {"max_speed", &p.max_speed},
                                      {"init_angle_bound", &p.init_angle_bound},
                                      {"init_speed_bound", &p.init_speed_bound},
                                      {"max_steps", &p.max_steps}});
  return p;
}

State Pendulum::true_transition(std::span<const float> state, std::span<const float> action) const {
  const Action u_clipped = clip_action(action);
  const double th = std::atan2(static_cast<double>(state[1]), static_cast<double>(state[0]));
  const double th_dot = state[2];
  const double u = u_clipped[0];
  const auto& p = params_;
  const double accel = 3.0 * p.gravity / (2.0 * p.length) * std::sin(th) +
                       3.0 / (p.mass * p.length * p.length) * u;
  const double new_th_dot = std::clamp(th_dot + p.dt * accel, -p.max_speed, p.max_speed);
  const double new_th = th + p.dt * new_th_dot;
  return {static_cast<float>(std::cos(new_th)), static_cast<float>(std::sin(new_th)),
          static_cast<float>(new_th_dot)};
}

State Pendulum::sample_initial_state(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> angle(-params_.init_angle_bound, params_.init_angle_bound);
  std::uniform_real_distribution<double> speed(-params_.init_speed_bound, params_.init_speed_bound);
  const double th = angle(rng);
  const double th_dot = speed(rng);
  return {static_cast<float>(std::cos(th)), static_cast<float>(std::sin(th)),
          static_cast<float>(th_dot)};
}

float Pendulum::reward(std::span<const float> state, std::span<const float> clipped_action,
                       std::span<const float>) const {
  const double th = wrap_angle(std::atan2(static_cast<double>(state[1]), static_cast<double>(state[0])));
  const double th_dot = state[2];
  const double u = clipped_action[0];
  return static_cast<float>(-(th * th + 0.1 * th_dot * th_dot + 0.001 * u * u));
}

}  // namespace rtslab::envs
