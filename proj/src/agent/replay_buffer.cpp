#include "rtslab/agent/replay_buffer.hpp"

#include "rtslab/errors.hpp"

namespace rtslab::agent {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ContractError("replay buffer capacity must be positive");
  items_.reserve(std::min<std::size_t>(capacity_, 1u << 20));
  steps_.reserve(items_.capacity());
}

void ReplayBuffer::push(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    steps_.push_back(insertions_);
  } else {
    items_[cursor_] = std::move(t);
    steps_[cursor_] = insertions_;
  }
  cursor_ = (cursor_ + 1) % capacity_;
  ++insertions_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t count, std::mt19937_64& rng) const {
  if (items_.empty()) throw ContractError("sampling from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> dist(0, items_.size() - 1);
  std::vector<std::size_t> out(count);
  for (auto& i : out) i = dist(rng);
  return out;
}

}  // namespace rtslab::agent
