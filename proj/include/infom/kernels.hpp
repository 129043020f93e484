#pragma once

// Value-level numeric kernels shared by the taped ops and the untaped
// inference paths, so both produce bit-identical results.

#include "infom/tensor.hpp"

namespace infom::kernels {

inline constexpr double kLayerNormEps = 1e-6;

/// out = a[m,k] * b[k,n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// out = a^T[k,m] * b[m,n]  (a is [m,k])
Tensor matmul_tn(const Tensor& a, const Tensor& b);
/// out = a[m,n] * b^T  (b is [k,n])
Tensor matmul_nt(const Tensor& a, const Tensor& b);

void add_bias_inplace(Tensor& x, const Tensor& bias);
double gelu(double x);
double gelu_grad(double x);
void gelu_inplace(Tensor& x);

/// Row-wise layer normalization with gain and bias. When `normalized` and
/// `inv_std` are non-null they receive the per-element x-hat and per-row
/// 1/sqrt(var+eps) for the backward pass.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  std::vector<double>* normalized = nullptr,
                  std::vector<double>* inv_std = nullptr);

/// Throws NonFiniteError naming `what` if any entry is NaN or infinite.
void check_finite(const Tensor& t, const char* what);

}  // namespace infom::kernels
