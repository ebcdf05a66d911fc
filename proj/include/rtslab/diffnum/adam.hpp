#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rtslab/diffnum/tensor.hpp"

namespace rtslab::diffnum {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// First and second moment estimates, one pair per parameter tensor.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;
};

// One bias-corrected Adam update of `params` in place. Moments are created on
// the first call; afterwards params, grads and moments must agree in shape.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const AdamConfig& config);

}  // namespace rtslab::diffnum
