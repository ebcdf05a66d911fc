#pragma once

#include "rtslab/envs/env.hpp"

namespace rtslab::envs {

// Cart-pole with a continuous force in [-1, 1] * force_mag. State [x, x_dot,
// th, th_dot]; explicit Euler on the classic cart-pole equations. Reward +1 per
// step; the episode fails once |x| > x_limit or |th| > theta_limit.
struct CartPoleParams {
  double gravity = 9.8;
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double pole_half_length = 0.5;
  double force_mag = 10.0;
  double dt = 0.02;
  double theta_limit = 0.2095;
  double x_limit = 2.4;
  double init_bound = 0.05;
  int max_steps = 200;
};

class CartPole final : public Env {
 public:
  explicit CartPole(CartPoleParams params = {});
  static CartPoleParams params_from(const PhysicsOverrides& overrides);

  const EnvSpec& spec() const override { return spec_; }
  std::unique_ptr<Env> clone() const override { return std::make_unique<CartPole>(*this); }
  State true_transition(std::span<const float> state, std::span<const float> action) const override;
  const CartPoleParams& params() const { return params_; }

 protected:
  State sample_initial_state(std::mt19937_64& rng) const override;
  float reward(std::span<const float>, std::span<const float>, std::span<const float>) const override {
    return 1.0f;
  }
  bool failed(std::span<const float> next_state) const override;

 private:
  CartPoleParams params_;
  EnvSpec spec_;
};

}  // namespace rtslab::envs
