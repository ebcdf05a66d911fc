#include "rtslab/envs/cartpole.hpp"

#include <cmath>

#include "overrides.hpp"

namespace rtslab::envs {

CartPole::CartPole(CartPoleParams params) : params_(params) {
  if (params_.max_steps < 1) throw ConfigError("env.physics.max_steps", "must be >= 1");
  spec_ = EnvSpec{"cartpole-continuous", 4, 1, {-1.0f}, {1.0f}, params_.max_steps, 1.0f,
                  "failure when |x| > x_limit or |theta| > theta_limit"};
}

CartPoleParams CartPole::params_from(const PhysicsOverrides& overrides) {
  CartPoleParams p;
  detail::apply_overrides(overrides, {{"gravity", &p.gravity},
                                      {"cart_mass", &p.cart_mass},
                                      {"pole_mass", &p.pole_mass},
                                      {"pole_half_length", &p.pole_half_length},
                                      {"force_mag", &p.force_mag},
                                      {"dt", &p.dt},
                                      {"theta_limit", &p.theta_limit},
                                      {"x_limit", &p.x_limit},
                                      {"init_bound", &p.init_bound},
                                      {"max_steps", &p.max_steps}});
  return p;
}

State CartPole::true_transition(std::span<const float> state, std::span<const float> action) const {
  const Action a = clip_action(action);
  const auto& p = params_;
  const double x = state[0];
  const double x_dot = state[1];
  const double th = state[2];
  const double th_dot = state[3];
  const double force = p.force_mag * a[0];
  const double total_mass = p.cart_mass + p.pole_mass;
  const double pole_ml = p.pole_mass * p.pole_half_length;
  const double c = std::cos(th);
  const double s = std::sin(th);
  const double temp = (force + pole_ml * th_dot * th_dot * s) / total_mass;
  const double th_acc = (p.gravity * s - c * temp) /
                        (p.pole_half_length * (4.0 / 3.0 - p.pole_mass * c * c / total_mass));
  const double x_acc = temp - pole_ml * th_acc * c / total_mass;
  return {static_cast<float>(x + p.dt * x_dot), static_cast<float>(x_dot + p.dt * x_acc),
          static_cast<float>(th + p.dt * th_dot), static_cast<float>(th_dot + p.dt * th_acc)};
}

State CartPole::sample_initial_state(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> dist(-params_.init_bound, params_.init_bound);
  State s(4);
  for (float& v : s) v = static_cast<float>(dist(rng));
  return s;
}

bool CartPole::failed(std::span<const float> s) const {
  return std::abs(s[0]) > params_.x_limit || std::abs(s[2]) > params_.theta_limit;
}

}  // namespace rtslab::envs
