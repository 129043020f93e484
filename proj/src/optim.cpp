#include "infom/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace infom {

AdamState AdamState::zeros_for(const ParamSet& params) {
  return AdamState{zeros_like(params), zeros_like(params), 0};
}

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state,
               const AdamConfig& config) {
  if (!(config.lr > 0.0)) throw std::invalid_argument("adam_step: lr must be > 0");
  if (grads.size() != params.size() || state.first_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: parameter/gradient/state sets differ");
  }
  for (const auto& [name, p] : params) {
    auto it = grads.find(name);
    if (it == grads.end() || !it->second.same_shape(p)) {
      throw std::invalid_argument("adam_step: gradient shape mismatch for " + name);
    }
    if (!it->second.all_finite()) {
      throw std::invalid_argument("adam_step: non-finite gradient for " + name);
    }
    if (!state.first_moment.at(name).same_shape(p)) {
      throw std::invalid_argument("adam_step: moment shape mismatch for " + name);
    }
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);

  for (auto& [name, p] : params) {
    const Tensor& g = grads.at(name);
    Tensor& m = state.first_moment.at(name);
    Tensor& v = state.second_moment.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
}

void polyak_update(ParamSet& target, const ParamSet& online, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("polyak_update: tau must be in (0, 1]");
  if (target.size() != online.size()) {
    throw std::invalid_argument("polyak_update: parameter sets differ");
  }
  for (auto& [name, t] : target) {
    auto it = online.find(name);
    if (it == online.end() || !it->second.same_shape(t)) {
      throw std::invalid_argument("polyak_update: mismatch for " + name);
    }
    const Tensor& o = it->second;
    if (tau == 1.0) {
      t = o;
      continue;
    }
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = (1.0 - tau) * t[i] + tau * o[i];
  }
}

}  // namespace infom
