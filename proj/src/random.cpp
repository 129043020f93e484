#include "infom/random.hpp"

#include <stdexcept>

namespace infom {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined word
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Rng Rng::derive(std::uint64_t master, Stream purpose, std::uint64_t step) {
  return Rng(mix_seed(mix_seed(master, static_cast<std::uint64_t>(purpose)), step));
}

std::size_t Rng::categorical(std::span<const double> weights) {
  if (weights.empty()) throw std::invalid_argument("categorical: empty weights");
  double total = 0.0;
  for (double w : weights) total += w;
  double u = uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  // Rounding can leave u marginally above the last bucket.
  for (std::size_t i = weights.size(); i-- > 0;)
    if (weights[i] > 0.0) return i;
  return weights.size() - 1;
}

Tensor Rng::normal_tensor(std::size_t rows, std::size_t cols) {
  Tensor out = Tensor::matrix(rows, cols);
  for (double& v : out.data()) v = normal();
  return out;
}

Tensor Rng::uniform_tensor(std::size_t rows, std::size_t cols) {
  Tensor out = Tensor::matrix(rows, cols);
  for (double& v : out.data()) v = uniform();
  return out;
}

}  // namespace infom
