#include "rtslab/diffnum/tape.hpp"

#include <algorithm>
#include <cmath>

#include "rtslab/diffnum/kernels.hpp"
#include "rtslab/errors.hpp"

namespace rtslab::diffnum {

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

void accumulate(Tensor& slot, Tensor delta) {
  if (slot.size() == 0 && slot.shape().empty()) {
    slot = std::move(delta);
    return;
  }
  auto dst = slot.data();
  auto src = delta.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Tensor column_sums(const Tensor& g, const Shape& shape) {
  Tensor out(shape);
  const std::size_t n = g.rows();
  const std::size_t m = g.cols();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < m; ++c) out[c] += g[r * m + c];
  }
  return out;
}

}  // namespace

const Tensor& Var::value() const { return tape_->nodes_[id_].value(); }

Var Tape::constant(Tensor value) {
  Node node;
  node.owned = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant_ref(const Tensor& value) {
  Node node;
  node.borrowed = &value;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(const Tensor& value) {
  Node node;
  node.borrowed = &value;
  node.param = &value;
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_same_tape(const Var& v) const {
  if (v.tape_ != this) throw ContractError("variable belongs to a different tape");
}

Var Tape::push(Op op, Tensor value, std::size_t lhs, std::size_t rhs, float scalar,
               bool two_inputs) {
  Node node;
  node.op = op;
  node.lhs = lhs;
  node.rhs = rhs;
  node.scalar = scalar;
  node.requires_grad = nodes_[lhs].requires_grad || (two_inputs && nodes_[rhs].requires_grad);
  node.owned = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var matmul(Var x, Var w) {
  Tape& t = x.tape();
  t.check_same_tape(w);
  return t.push(Tape::Op::matmul, kernels::matmul(x.value(), w.value()), x.id(), w.id(), 0, true);
}

Var add_row(Var x, Var b) {
  Tape& t = x.tape();
  t.check_same_tape(b);
  Tensor out = x.value();
  kernels::add_row_inplace(out, b.value());
  return t.push(Tape::Op::add_row, std::move(out), x.id(), b.id(), 0, true);
}

Var mul_row(Var x, Var c) {
  Tape& t = x.tape();
  t.check_same_tape(c);
  const Tensor& cv = c.value();
  if (cv.size() != x.value().cols()) {
    throw DimensionError("mul_row: row of " + std::to_string(cv.size()) + " for " +
                         shape_string(x.value().shape()));
  }
  Tensor out = x.value();
  const std::size_t m = out.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= cv[i % m];
  return t.push(Tape::Op::mul_row, std::move(out), x.id(), c.id(), 0, true);
}

Var operator+(Var a, Var b) {
  Tape& t = a.tape();
  t.check_same_tape(b);
  require_same_shape("add", a.value(), b.value());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return t.push(Tape::Op::add, std::move(out), a.id(), b.id(), 0, true);
}

Var operator-(Var a, Var b) {
  Tape& t = a.tape();
  t.check_same_tape(b);
  require_same_shape("sub", a.value(), b.value());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return t.push(Tape::Op::sub, std::move(out), a.id(), b.id(), 0, true);
}

Var operator*(Var a, Var b) {
  Tape& t = a.tape();
  t.check_same_tape(b);
  require_same_shape("mul", a.value(), b.value());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return t.push(Tape::Op::mul, std::move(out), a.id(), b.id(), 0, true);
}

Var scale(Var x, float factor) {
  Tensor out = x.value();
  for (float& v : out.data()) v *= factor;
  return x.tape().push(Tape::Op::scale, std::move(out), x.id(), 0, factor);
}

Var add_scalar(Var x, float offset) {
  Tensor out = x.value();
  for (float& v : out.data()) v += offset;
  return x.tape().push(Tape::Op::add_scalar, std::move(out), x.id(), 0, offset);
}

Var tanh(Var x) {
  Tensor out = x.value();
  kernels::tanh_inplace(out);
  return x.tape().push(Tape::Op::tanh, std::move(out), x.id());
}

Var relu(Var x) {
  Tensor out = x.value();
  kernels::relu_inplace(out);
  return x.tape().push(Tape::Op::relu, std::move(out), x.id());
}

Var square(Var x) {
  Tensor out = x.value();
  for (float& v : out.data()) v *= v;
  return x.tape().push(Tape::Op::square, std::move(out), x.id());
}

Var sum(Var x) {
  float total = 0.0f;
  for (float v : x.value().data()) total += v;
  return x.tape().push(Tape::Op::sum, Tensor::scalar(total), x.id());
}

Var mean(Var x) {
  const auto& v = x.value();
  if (v.size() == 0) throw ContractError("mean of empty tensor");
  float total = 0.0f;
  for (float e : v.data()) total += e;
  return x.tape().push(Tape::Op::mean, Tensor::scalar(total / static_cast<float>(v.size())),
                       x.id());
}

Var row_norm(Var x) {
  const auto& v = x.value();
  const std::size_t n = v.rows();
  const std::size_t m = v.cols();
  Tensor out = Tensor::matrix(n, 1);
  for (std::size_t r = 0; r < n; ++r) {
    float acc = 0.0f;
    for (std::size_t c = 0; c < m; ++c) acc += v[r * m + c] * v[r * m + c];
    out[r] = std::sqrt(acc);
  }
  return x.tape().push(Tape::Op::row_norm, std::move(out), x.id());
}

Var concat_cols(Var a, Var b) {
  Tape& t = a.tape();
  t.check_same_tape(b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rows() != bv.rows()) {
    throw DimensionError("concat_cols: row counts " + std::to_string(av.rows()) + " and " +
                         std::to_string(bv.rows()));
  }
  const std::size_t n = av.rows();
  const std::size_t p = av.cols();
  const std::size_t q = bv.cols();
  Tensor out = Tensor::matrix(n, p + q);
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(av.data().data() + r * p, p, out.data().data() + r * (p + q));
    std::copy_n(bv.data().data() + r * q, q, out.data().data() + r * (p + q) + p);
  }
  return t.push(Tape::Op::concat_cols, std::move(out), a.id(), b.id(), 0, true);
}

void Tape::backward_node(const Node& node, const Tensor& g, std::vector<Tensor>& grads) const {
  const Node& lhs = nodes_[node.lhs];
  const Node& rhs = nodes_[node.rhs];
  const Tensor& x = lhs.value();
  switch (node.op) {
    case Op::leaf:
      return;
    case Op::matmul:
      if (lhs.requires_grad) accumulate(grads[node.lhs], kernels::matmul_nt(g, rhs.value()));
      if (rhs.requires_grad) accumulate(grads[node.rhs], kernels::matmul_tn(x, g));
      return;
    case Op::add_row:
      if (lhs.requires_grad) accumulate(grads[node.lhs], g);
      if (rhs.requires_grad) accumulate(grads[node.rhs], column_sums(g, rhs.value().shape()));
      return;
    case Op::mul_row: {
      const Tensor& c = rhs.value();
      const std::size_t m = x.cols();
      if (lhs.requires_grad) {
        Tensor gx = g;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= c[i % m];
        accumulate(grads[node.lhs], std::move(gx));
      }
      if (rhs.requires_grad) {
        Tensor gx = g;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= x[i];
        accumulate(grads[node.rhs], column_sums(gx, c.shape()));
      }
      return;
    }
    case Op::add:
      if (lhs.requires_grad) accumulate(grads[node.lhs], g);
      if (rhs.requires_grad) accumulate(grads[node.rhs], g);
      return;
    case Op::sub:
      if (lhs.requires_grad) accumulate(grads[node.lhs], g);
      if (rhs.requires_grad) {
        Tensor neg = g;
        for (float& v : neg.data()) v = -v;
        accumulate(grads[node.rhs], std::move(neg));
      }
      return;
    case Op::mul:
      if (lhs.requires_grad) {
        Tensor ga = g;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= rhs.value()[i];
        accumulate(grads[node.lhs], std::move(ga));
      }
      if (rhs.requires_grad) {
        Tensor gb = g;
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= x[i];
        accumulate(grads[node.rhs], std::move(gb));
      }
      return;
    case Op::scale: {
      Tensor gx = g;
      for (float& v : gx.data()) v *= node.scalar;
      accumulate(grads[node.lhs], std::move(gx));
      return;
    }
    case Op::add_scalar:
      accumulate(grads[node.lhs], g);
      return;
    case Op::tanh: {
      Tensor gx = g;
      const Tensor& z = node.value();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= 1.0f - z[i] * z[i];
      accumulate(grads[node.lhs], std::move(gx));
      return;
    }
    case Op::relu: {
      Tensor gx = g;
      for (std::size_t i = 0; i < gx.size(); ++i) {
        if (!(x[i] > 0.0f)) gx[i] = 0.0f;
      }
      accumulate(grads[node.lhs], std::move(gx));
      return;
    }
    case Op::square: {
      Tensor gx = g;
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= 2.0f * x[i];
      accumulate(grads[node.lhs], std::move(gx));
      return;
    }
    case Op::sum:
      accumulate(grads[node.lhs], Tensor(x.shape(), g.item()));
      return;
    case Op::mean:
      accumulate(grads[node.lhs], Tensor(x.shape(), g.item() / static_cast<float>(x.size())));
      return;
    case Op::row_norm: {
      const Tensor& z = node.value();
      const std::size_t m = x.cols();
      Tensor gx(x.shape());
      for (std::size_t r = 0; r < x.rows(); ++r) {
        if (!(z[r] > 0.0f)) continue;
        const float k = g[r] / z[r];
        for (std::size_t c = 0; c < m; ++c) gx[r * m + c] = k * x[r * m + c];
      }
      accumulate(grads[node.lhs], std::move(gx));
      return;
    }
    case Op::concat_cols: {
      const std::size_t n = x.rows();
      const std::size_t p = x.cols();
      const std::size_t q = rhs.value().cols();
      if (lhs.requires_grad) {
        Tensor ga(x.shape());
        for (std::size_t r = 0; r < n; ++r) {
          std::copy_n(g.data().data() + r * (p + q), p, ga.data().data() + r * p);
        }
        accumulate(grads[node.lhs], std::move(ga));
      }
      if (rhs.requires_grad) {
        Tensor gb(rhs.value().shape());
        for (std::size_t r = 0; r < n; ++r) {
          std::copy_n(g.data().data() + r * (p + q) + p, q, gb.data().data() + r * q);
        }
        accumulate(grads[node.rhs], std::move(gb));
      }
      return;
    }
  }
}

std::vector<Tensor> Tape::gradient(Var loss, std::span<const Tensor* const> wrt) {
  check_same_tape(loss);
  if (differentiated_) {
    throw ContractError("tape already differentiated; record a new forward pass first");
  }
  if (loss.value().size() != 1) {
    throw ContractError("gradient needs a scalar loss, got shape " +
                        shape_string(loss.value().shape()));
  }
  for (const Tensor* p : wrt) {
    const bool seen = std::any_of(nodes_.begin(), nodes_.end(),
                                  [p](const Node& n) { return n.param == p; });
    if (!seen) throw ContractError("requested parameter did not take part in the taped pass");
  }
  differentiated_ = true;

  std::vector<Tensor> grads(nodes_.size());
  grads[loss.id()] = Tensor(loss.value().shape(), 1.0f);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (!node.requires_grad || node.op == Op::leaf) continue;
    if (grads[i].shape().empty()) continue;
    backward_node(node, grads[i], grads);
    if (node.op != Op::leaf) grads[i] = Tensor();
  }

  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (const Tensor* p : wrt) {
    Tensor total(p->shape());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].param != p || grads[i].shape().empty()) continue;
      for (std::size_t k = 0; k < total.size(); ++k) total[k] += grads[i][k];
    }
    out.push_back(std::move(total));
  }
  return out;
}

}  // namespace rtslab::diffnum
