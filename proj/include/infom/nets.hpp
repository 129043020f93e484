#pragma once

#include <string>
#include <vector>

#include "infom/autodiff.hpp"
#include "infom/random.hpp"

namespace infom {

enum class Activation { Gelu };

/// Dense -> [LayerNorm] -> GELU for every hidden layer, then a linear output.
struct MlpConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t output_dim = 0;
  bool layer_norm = true;
  Activation activation = Activation::Gelu;

  void validate() const;
};

/// Parameters named "<prefix>dense_<i>/kernel", "<prefix>dense_<i>/bias",
/// "<prefix>norm_<i>/scale", "<prefix>norm_<i>/bias", "<prefix>out/kernel",
/// "<prefix>out/bias". Kernels are LeCun-normal, everything else 0 (scale 1).
ParamSet init_mlp(const MlpConfig& config, Rng& rng, const std::string& prefix = "");

Var mlp_forward(Tape& tape, const ParamSet& params, const MlpConfig& config, Var input,
                const std::string& prefix = "");
/// Untaped forward pass; bit-identical to the taped one.
Tensor mlp_forward(const ParamSet& params, const MlpConfig& config, const Tensor& input,
                   const std::string& prefix = "");

inline constexpr double kLogStdMin = -10.0;
inline constexpr double kLogStdMax = 2.0;

/// Diagonal Gaussian over the columns of `mean`, one distribution per row.
struct GaussianParams {
  Var mean;
  Var log_std;
};

/// Splits a [B, 2d] network output into mean and log-std (clamped to
/// [kLogStdMin, kLogStdMax]).
GaussianParams gaussian_head(Var output);

/// mean + exp(log_std) * noise (reparameterized).
Var gaussian_sample(const GaussianParams& g, const Tensor& noise);
/// Per-row diagonal Gaussian log-density, shape [B, 1].
Var gaussian_log_prob(const GaussianParams& g, Var x);
/// Per-row KL(N(mean, diag(std^2)) || N(0, I)), shape [B, 1].
Var kl_to_standard_normal(const GaussianParams& g);

/// Gaussian policy with a learned mean and fixed unit standard deviation.
struct PolicyModel {
  MlpConfig config;
  ParamSet params;

  static PolicyModel create(std::size_t state_dim, std::size_t action_dim,
                            const std::vector<std::size_t>& hidden, Rng& rng);

  std::size_t action_dim() const { return config.output_dim; }
  Var mean(Tape& tape, const Tensor& states) const;
  Tensor mean(const Tensor& states) const;
  GaussianParams distribution(Tape& tape, const Tensor& states) const;
};

}  // namespace infom
