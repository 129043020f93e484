#pragma once

#include <cstdint>

#include "infom/tensor.hpp"

namespace infom {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  ParamSet first_moment;
  ParamSet second_moment;
  std::uint64_t step = 0;

  static AdamState zeros_for(const ParamSet& params);
};

/// Bias-corrected Adam update applied in place.
void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state,
               const AdamConfig& config = {});

/// target <- (1 - tau) * target + tau * online.
void polyak_update(ParamSet& target, const ParamSet& online, double tau);

}  // namespace infom
