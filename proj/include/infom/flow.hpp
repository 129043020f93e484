#pragma once

#include <functional>
#include <span>
#include <vector>

#include "infom/autodiff.hpp"
#include "infom/dataset.hpp"
#include "infom/nets.hpp"

namespace infom {

/// MLP vector field v(t, x, s, a, z) -> R^state_dim. The input row is the
/// concatenation [t, x, s, a, z] with t as a raw scalar feature.
struct VectorFieldModel {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::size_t latent_dim = 0;
  MlpConfig config;
  ParamSet params;

  static VectorFieldModel create(std::size_t state_dim, std::size_t action_dim,
                                 std::size_t latent_dim, const std::vector<std::size_t>& hidden,
                                 Rng& rng);
};

/// Untaped velocity for row-aligned inputs; t is [B, 1].
Tensor velocity(const VectorFieldModel& vf, const Tensor& t, const Tensor& x, const Tensor& s,
                const Tensor& a, const Tensor& z);
Var velocity(Tape& tape, const VectorFieldModel& vf, Var t, Var x, Var s, Var a, Var z);

/// t * x + (1 - t) * eps.
std::vector<double> interpolate(std::span<const double> x, std::span<const double> eps, double t);
/// Row-wise interpolation with per-row times t [B, 1].
Tensor interpolate(const Tensor& x, const Tensor& eps, const Tensor& t);

using VelocityFn = std::function<Tensor(double t, const Tensor& x)>;

/// x_0 = eps, x_{k+1} = x_k + v(k / steps, x_k) / steps; returns x_steps.
Tensor euler_integrate(const Tensor& eps, std::size_t steps, const VelocityFn& v);
/// Euler solution of the flow ODE conditioned on (s, a, z).
Tensor euler_sample(const VectorFieldModel& vf, const Tensor& eps, const Tensor& s,
                    const Tensor& a, const Tensor& z, std::size_t steps);
/// Differentiable Euler solution; gradients reach a, z and vf's params.
Var euler_sample(Tape& tape, const VectorFieldModel& vf, const Tensor& eps, Var s, Var a, Var z,
                 std::size_t steps);

/// Transitions with the flow times and noises of one training step.
struct FlowBatch {
  Tensor states;
  Tensor actions;
  Tensor next_states;
  Tensor next_actions;
  Tensor times;  // [B, 1], in [0, 1]
  Tensor noise;  // [B, state_dim]

  std::size_t size() const { return states.rows(); }
  void validate() const;

  static FlowBatch from(const TransitionBatch& batch, Rng& time_rng, Rng& noise_rng);
};

/// mean_b || v(t, x^t, s, a, z) - (x - eps) ||^2 with x^t = interpolate(x, eps, t).
Var cfm_loss(Tape& tape, const VectorFieldModel& vf, const Tensor& x, const Tensor& s,
             const Tensor& a, Var z, const Tensor& t, const Tensor& eps);

struct FlowLoss {
  Var total;
  double current = 0.0;
  double future = 0.0;
};

/// (1 - gamma) * current + gamma * future. The future term regresses
/// v(t, sf^t, s, a, z) onto the target field at (s', a', z), where sf comes
/// from integrating the target field from the row's own noise. Everything
/// computed with the target field is a constant on the tape.
/// `target_latents` replaces z.value() as the target field's latent input.
FlowLoss sarsa_flow_loss(Tape& tape, const VectorFieldModel& vf, const VectorFieldModel& target,
                         const FlowBatch& batch, Var z, double gamma, std::size_t steps,
                         const Tensor* target_latents = nullptr);

/// Maps next states [B, ds] to next actions [B, da].
using TargetPolicy = std::function<Tensor(const Tensor& next_states)>;

/// sarsa_flow_loss with a' drawn from `policy` instead of the dataset.
FlowLoss td_flow_loss(Tape& tape, const VectorFieldModel& vf, const VectorFieldModel& target,
                      const FlowBatch& batch, Var z, const TargetPolicy& policy, double gamma,
                      std::size_t steps);

}  // namespace infom
