#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rtslab/diffnum/tensor.hpp"

namespace rtslab::diffnum {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Records one forward pass for reverse-mode differentiation. A tape is built
// fresh for every forward pass and can be differentiated exactly once.
//
// Leaves come in three flavours:
//  - constant(): owned copy, no gradient
//  - constant_ref(): borrowed, no gradient (frozen network weights)
//  - parameter(): borrowed, gradient available through gradient()
// Borrowed tensors must outlive the tape.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var constant_ref(const Tensor& value);
  Var parameter(const Tensor& value);

  // d(loss)/d(p) for every p in wrt, same shapes as p. `loss` must hold one
  // element and every p must have been recorded via parameter().
  std::vector<Tensor> gradient(Var loss, std::span<const Tensor* const> wrt);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    leaf,
    matmul,
    add_row,
    mul_row,
    add,
    sub,
    mul,
    scale,
    add_scalar,
    tanh,
    relu,
    square,
    sum,
    mean,
    row_norm,
    concat_cols,
  };

  struct Node {
    Op op = Op::leaf;
    std::size_t lhs = 0;
    std::size_t rhs = 0;
    float scalar = 0.0f;
    bool requires_grad = false;
    const Tensor* borrowed = nullptr;
    const Tensor* param = nullptr;
    Tensor owned;
    const Tensor& value() const { return borrowed ? *borrowed : owned; }
  };

  Var push(Op op, Tensor value, std::size_t lhs, std::size_t rhs = 0, float scalar = 0.0f,
           bool two_inputs = false);
  void check_same_tape(const Var& v) const;
  void backward_node(const Node& node, const Tensor& grad, std::vector<Tensor>& grads) const;

  std::vector<Node> nodes_;
  bool differentiated_ = false;

  friend class Var;
  friend Var matmul(Var, Var);
  friend Var add_row(Var, Var);
  friend Var mul_row(Var, Var);
  friend Var operator+(Var, Var);
  friend Var operator-(Var, Var);
  friend Var operator*(Var, Var);
  friend Var scale(Var, float);
  friend Var add_scalar(Var, float);
  friend Var tanh(Var);
  friend Var relu(Var);
  friend Var square(Var);
  friend Var sum(Var);
  friend Var mean(Var);
  friend Var row_norm(Var);
  friend Var concat_cols(Var, Var);
};

// x[n,k] * w[k,m]
Var matmul(Var x, Var w);
// x[n,m] + b[m], broadcast over rows
Var add_row(Var x, Var b);
// x[n,m] * c[m], broadcast over rows
Var mul_row(Var x, Var c);
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
// elementwise
Var operator*(Var a, Var b);
Var scale(Var x, float factor);
Var add_scalar(Var x, float offset);
Var tanh(Var x);
Var relu(Var x);
Var square(Var x);
// sum/mean of all elements -> [1]
Var sum(Var x);
Var mean(Var x);
// Euclidean norm of every row: [n,m] -> [n,1]
Var row_norm(Var x);
// [n,p] ++ [n,q] -> [n,p+q]
Var concat_cols(Var a, Var b);

}  // namespace rtslab::diffnum
