#pragma once

#include "rtslab/diffnum/tensor.hpp"

// Matrix kernels shared by the taped and untaped forward paths so both produce
// bit-identical values.
namespace rtslab::diffnum::kernels {

// a[n,k] * b[k,m]
Tensor matmul(const Tensor& a, const Tensor& b);
// a[n,k]^T * b[n,m] -> [k,m]
Tensor matmul_tn(const Tensor& a, const Tensor& b);
// a[n,m] * b[k,m]^T -> [n,k]
Tensor matmul_nt(const Tensor& a, const Tensor& b);

void add_row_inplace(Tensor& x, const Tensor& row);
void tanh_inplace(Tensor& x);
void relu_inplace(Tensor& x);

}  // namespace rtslab::diffnum::kernels
