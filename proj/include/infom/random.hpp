#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "infom/tensor.hpp"

namespace infom {

/// Independent random streams derived from one master seed. Each training
/// purpose draws from its own stream so toggling one component never shifts
/// another's draws.
enum class Stream : std::uint64_t {
  Init = 1,
  Data = 2,
  FlowNoise = 3,
  FlowTime = 4,
  Latent = 5,
  Policy = 6,
  FutureNoise = 7,
  PriorLatent = 8,
  Eval = 9,
  Environment = 10,
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Stream for (master seed, purpose, step). Steps index training iterations
  /// so a resumed run reproduces the exact draws of an uninterrupted one.
  static Rng derive(std::uint64_t master, Stream purpose, std::uint64_t step = 0);

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  /// Index drawn from a discrete distribution given by `weights`.
  std::size_t categorical(std::span<const double> weights);

  Tensor normal_tensor(std::size_t rows, std::size_t cols);
  Tensor uniform_tensor(std::size_t rows, std::size_t cols);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace infom
