#include "infom/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace infom {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_string());
  }
}

Tensor Tensor::scalar(double value) { return Tensor({}, std::vector<double>{value}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) {
  return Tensor({rows, cols}, fill);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::rows() const { return rank() == 2 ? shape_[0] : 1; }

std::size_t Tensor::cols() const {
  if (rank() == 2) return shape_[1];
  if (rank() == 1) return shape_[0];
  return 1;
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw std::invalid_argument("item() on tensor of shape " + shape_string());
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) out << ',';
    out << shape_[i];
  }
  out << ']';
  return out.str();
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

ParamSet zeros_like(const ParamSet& params) {
  ParamSet out;
  for (const auto& [name, p] : params) out.emplace(name, Tensor(p.shape(), 0.0));
  return out;
}

std::size_t parameter_count(const ParamSet& params) {
  std::size_t n = 0;
  for (const auto& [_, p] : params) n += p.size();
  return n;
}

Tensor concat_cols(std::initializer_list<const Tensor*> parts) {
  if (parts.size() == 0) throw std::invalid_argument("concat_cols: no inputs");
  const std::size_t rows = (*parts.begin())->rows();
  std::size_t cols = 0;
  for (const Tensor* p : parts) {
    if (p->rows() != rows) throw std::invalid_argument("concat_cols: row count mismatch");
    cols += p->cols();
  }
  Tensor out = Tensor::matrix(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double* dst = out.raw() + r * cols;
    for (const Tensor* p : parts) {
      const std::size_t c = p->cols();
      std::copy_n(p->raw() + r * c, c, dst);
      dst += c;
    }
  }
  return out;
}

Tensor repeat_rows(const Tensor& x, std::size_t times) {
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  Tensor out = Tensor::matrix(rows * times, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < times; ++k) {
      std::copy_n(x.raw() + r * cols, cols, out.raw() + (r * times + k) * cols);
    }
  }
  return out;
}

Tensor take_rows(const Tensor& x, std::span<const std::size_t> indices) {
  const std::size_t cols = x.cols();
  Tensor out = Tensor::matrix(indices.size(), cols);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= x.rows()) throw std::out_of_range("take_rows: index out of range");
    std::copy_n(x.raw() + indices[i] * cols, cols, out.raw() + i * cols);
  }
  return out;
}

}  // namespace infom
