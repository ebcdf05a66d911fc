#include "rtslab/diffnum/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "rtslab/errors.hpp"

namespace rtslab::diffnum::kernels {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap view(const Tensor& t) { return ConstMap(t.data().data(), t.rows(), t.cols()); }
MutMap view(Tensor& t) { return MutMap(t.data().data(), t.rows(), t.cols()); }

[[noreturn]] void mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) +
                       " and " + shape_string(b.shape()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) mismatch("matmul", a, b);
  Tensor out = Tensor::matrix(a.rows(), b.cols());
  view(out).noalias() = view(a) * view(b);
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) mismatch("matmul_tn", a, b);
  Tensor out = Tensor::matrix(a.cols(), b.cols());
  view(out).noalias() = view(a).transpose() * view(b);
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) mismatch("matmul_nt", a, b);
  Tensor out = Tensor::matrix(a.rows(), b.rows());
  view(out).noalias() = view(a) * view(b).transpose();
  return out;
}

void add_row_inplace(Tensor& x, const Tensor& row) {
  if (row.size() != x.cols()) mismatch("add_row", x, row);
  const std::size_t n = x.rows();
  const std::size_t m = x.cols();
  float* px = x.data().data();
  const float* pr = row.data().data();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < m; ++c) px[r * m + c] += pr[c];
  }
}

void tanh_inplace(Tensor& x) {
  for (float& v : x.data()) v = std::tanh(v);
}

void relu_inplace(Tensor& x) {
  for (float& v : x.data()) v = std::max(v, 0.0f);
}

}  // namespace rtslab::diffnum::kernels
