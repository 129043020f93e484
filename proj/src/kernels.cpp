#include "infom/kernels.hpp"

#include <Eigen/Core>
#include <cmath>
#include <numbers>

namespace infom::kernels {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstView = Eigen::Map<const RowMat>;
using View = Eigen::Map<RowMat>;

ConstView view(const Tensor& t) {
  return ConstView(t.raw(), static_cast<Eigen::Index>(t.rows()),
                   static_cast<Eigen::Index>(t.cols()));
}

View view(Tensor& t) {
  return View(t.raw(), static_cast<Eigen::Index>(t.rows()),
              static_cast<Eigen::Index>(t.cols()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: " + a.shape_string() + " x " + b.shape_string());
  }
  Tensor out = Tensor::matrix(a.rows(), b.cols());
  view(out).noalias() = view(a) * view(b);
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) {
    throw std::invalid_argument("matmul_tn: " + a.shape_string() + " x " + b.shape_string());
  }
  Tensor out = Tensor::matrix(a.cols(), b.cols());
  view(out).noalias() = view(a).transpose() * view(b);
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("matmul_nt: " + a.shape_string() + " x " + b.shape_string());
  }
  Tensor out = Tensor::matrix(a.rows(), b.rows());
  view(out).noalias() = view(a) * view(b).transpose();
  return out;
}

void add_bias_inplace(Tensor& x, const Tensor& bias) {
  const std::size_t cols = x.cols();
  if (bias.size() != cols) {
    throw std::invalid_argument("add_bias: " + x.shape_string() + " + " + bias.shape_string());
  }
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double* row = x.raw() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += bias[c];
  }
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  return cdf + x * pdf;
}

void gelu_inplace(Tensor& x) {
  for (double& v : x.data()) v = gelu(v);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  std::vector<double>* normalized, std::vector<double>* inv_std) {
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  if (gain.size() != cols || bias.size() != cols) {
    throw std::invalid_argument("layer_norm: parameter size mismatch");
  }
  Tensor out = Tensor::matrix(rows, cols);
  if (normalized) normalized->assign(rows * cols, 0.0);
  if (inv_std) inv_std->assign(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.raw() + r * cols;
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += in[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    double* o = out.raw() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      const double xhat = (in[c] - mean) * inv;
      if (normalized) (*normalized)[r * cols + c] = xhat;
      o[c] = xhat * gain[c] + bias[c];
    }
    if (inv_std) (*inv_std)[r] = inv;
  }
  return out;
}

void check_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) {
    throw NonFiniteError(std::string("non-finite value produced by ") + what);
  }
}

}  // namespace infom::kernels
