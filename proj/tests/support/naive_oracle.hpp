#pragma once

// Double-precision reference arithmetic for tests. Deliberately naive loops,
// sharing no code with the library kernels.

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "rtslab/diffnum/mlp.hpp"
#include "rtslab/diffnum/tensor.hpp"

namespace oracle {

struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}
  double& operator()(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

inline Mat from(const rtslab::diffnum::Tensor& t) {
  Mat m(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.size(); ++i) m.v[i] = t[i];
  return m;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  return out;
}

inline Mat map(Mat m, const std::function<double(double)>& f) {
  for (double& x : m.v) x = f(x);
  return m;
}

inline Mat add_row(Mat x, const Mat& b) {
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j) x(i, j) += b.v[j];
  return x;
}

inline Mat concat(const Mat& a, const Mat& b) {
  Mat out(a.rows, a.cols + b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < a.cols; ++j) out(i, j) = a(i, j);
    for (std::size_t j = 0; j < b.cols; ++j) out(i, a.cols + j) = b(i, j);
  }
  return out;
}

inline double act(double x, rtslab::diffnum::Activation a) {
  switch (a) {
    case rtslab::diffnum::Activation::tanh:
      return std::tanh(x);
    case rtslab::diffnum::Activation::relu:
      return x > 0.0 ? x : 0.0;
    default:
      return x;
  }
}

// Forward pass of an Mlp whose parameters are given as double matrices.
inline Mat mlp(const rtslab::diffnum::Mlp& shape_of, const std::vector<Mat>& params, Mat x) {
  const std::size_t n_layers = shape_of.layers().size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    x = add_row(matmul(x, params[2 * l]), params[2 * l + 1]);
    const auto a = l + 1 == n_layers ? shape_of.output_activation() : shape_of.hidden_activation();
    x = map(std::move(x), [a](double v) { return act(v, a); });
  }
  return x;
}

inline std::vector<Mat> params_of(const rtslab::diffnum::Mlp& net) {
  std::vector<Mat> out;
  for (const auto* p : net.parameters()) out.push_back(from(*p));
  return out;
}

// Central differences of f over every element of `inputs`.
inline std::vector<Mat> central_diff(const std::function<double(const std::vector<Mat>&)>& f,
                                     std::vector<Mat> inputs, double h) {
  std::vector<Mat> grads;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Mat g(inputs[i].rows, inputs[i].cols);
    for (std::size_t k = 0; k < inputs[i].v.size(); ++k) {
      const double orig = inputs[i].v[k];
      inputs[i].v[k] = orig + h;
      const double up = f(inputs);
      inputs[i].v[k] = orig - h;
      const double down = f(inputs);
      inputs[i].v[k] = orig;
      g.v[k] = (up - down) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

// ||a - b|| / ||b|| over all entries of all tensors.
inline double relative_error(const std::vector<rtslab::diffnum::Tensor>& analytic,
                             const std::vector<Mat>& reference) {
  double diff = 0.0;
  double norm = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    for (std::size_t k = 0; k < reference[i].v.size(); ++k) {
      const double d = static_cast<double>(analytic[i][k]) - reference[i].v[k];
      diff += d * d;
      norm += reference[i].v[k] * reference[i].v[k];
    }
  }
  return std::sqrt(diff) / std::max(std::sqrt(norm), 1e-12);
}

}  // namespace oracle
