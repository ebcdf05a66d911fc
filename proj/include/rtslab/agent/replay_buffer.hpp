#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "rtslab/envs/env.hpp"

namespace rtslab::agent {

struct Transition {
  envs::State state;
  envs::Action action;
  float reward = 0.0f;
  envs::State next_state;
  // True only for failure terminations; horizon truncation keeps bootstrapping.
  bool done = false;

  bool operator==(const Transition&) const = default;
};

// Fixed-capacity ring of transitions. Remembers the global insertion step of
// every stored record so poisoning can respect an injection schedule.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);

  std::size_t size() const noexcept { return items_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  std::int64_t insertions() const noexcept { return insertions_; }

  const Transition& operator[](std::size_t slot) const { return items_.at(slot); }
  Transition& operator[](std::size_t slot) { return items_.at(slot); }
  std::int64_t insertion_step(std::size_t slot) const { return steps_.at(slot); }

  // Uniform draw with replacement over stored slots.
  std::vector<std::size_t> sample_indices(std::size_t count, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::size_t cursor_ = 0;
  std::int64_t insertions_ = 0;
  std::vector<Transition> items_;
  std::vector<std::int64_t> steps_;
};

}  // namespace rtslab::agent
