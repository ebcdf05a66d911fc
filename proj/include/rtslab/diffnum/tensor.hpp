#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace rtslab::diffnum {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

// Dense row-major float32 tensor. Most operations view a tensor as a matrix of
// rows() x cols(), where cols() is the last dimension and rows() the product of
// the leading ones; a rank-1 tensor is a single row.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  static Tensor matrix(std::size_t rows, std::size_t cols, float fill = 0.0f);
  static Tensor row(std::span<const float> values);
  static Tensor scalar(float value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;

  std::span<float> data() noexcept { return values_; }
  std::span<const float> data() const noexcept { return values_; }
  const std::vector<float>& values() const noexcept { return values_; }

  float& operator[](std::size_t i) { return values_[i]; }
  float operator[](std::size_t i) const { return values_[i]; }
  float& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  float at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  std::span<float> row_span(std::size_t r) { return data().subspan(r * cols(), cols()); }
  std::span<const float> row_span(std::size_t r) const { return data().subspan(r * cols(), cols()); }

  // Value of a one-element tensor; throws ContractError otherwise.
  float item() const;
  bool all_finite() const noexcept;
  void fill(float value);

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<float> values_;
};

}  // namespace rtslab::diffnum
