#pragma once

#include "infom/flow.hpp"
#include "infom/nets.hpp"

namespace infom {

/// Maps (s', a') to a diagonal Gaussian over a latent intention z.
struct IntentionEncoder {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::size_t latent_dim = 0;
  MlpConfig config;
  ParamSet params;

  static IntentionEncoder create(std::size_t state_dim, std::size_t action_dim,
                                 std::size_t latent_dim, const std::vector<std::size_t>& hidden,
                                 Rng& rng);
};

GaussianParams encode(Tape& tape, const IntentionEncoder& enc, const Tensor& next_states,
                      const Tensor& next_actions);
/// Untaped posterior mean, [B, latent_dim].
Tensor encode_mean(const IntentionEncoder& enc, const Tensor& next_states,
                   const Tensor& next_actions);

struct ElboConfig {
  double kl_coef = 0.05;
  /// Replace the sampled z by a detached copy (gradient audit only).
  bool block_latent_grad = false;
  /// Latents for the bootstrap target instead of the sampled z. Holding
  /// them fixed makes the loss a function whose exact gradient is the
  /// semi-gradient backward() returns (finite-difference checks only).
  const Tensor* target_latents = nullptr;
};

struct ElboTerms {
  Var total;
  double flow_current = 0.0;
  double flow_future = 0.0;
  double kl = 0.0;
  /// The reparameterized z used for every row.
  Tensor latents;
};

/// sarsa_flow_loss with z ~ p(z | s', a') (reparameterized with
/// `latent_noise`, one sample per row) plus kl_coef * mean KL(p || N(0, I)).
ElboTerms elbo_objective(Tape& tape, const VectorFieldModel& vf, const VectorFieldModel& target,
                         const IntentionEncoder& enc, const FlowBatch& batch,
                         const Tensor& latent_noise, double gamma, const ElboConfig& config,
                         std::size_t steps);

/// rows x d standard normal latents.
Tensor prior_sample(std::size_t rows, std::size_t latent_dim, Rng& rng);

}  // namespace infom
