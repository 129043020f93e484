#include "infom/intention.hpp"

#include <stdexcept>

namespace infom {

IntentionEncoder IntentionEncoder::create(std::size_t state_dim, std::size_t action_dim,
                                          std::size_t latent_dim,
                                          const std::vector<std::size_t>& hidden, Rng& rng) {
  if (latent_dim == 0) throw std::invalid_argument("IntentionEncoder: latent_dim must be >= 1");
  IntentionEncoder enc;
  enc.state_dim = state_dim;
  enc.action_dim = action_dim;
  enc.latent_dim = latent_dim;
  enc.config = MlpConfig{state_dim + action_dim, hidden, 2 * latent_dim, true, Activation::Gelu};
  enc.params = init_mlp(enc.config, rng);
  return enc;
}

GaussianParams encode(Tape& tape, const IntentionEncoder& enc, const Tensor& next_states,
                      const Tensor& next_actions) {
  if (next_states.cols() != enc.state_dim || next_actions.cols() != enc.action_dim ||
      next_states.rows() != next_actions.rows()) {
    throw std::invalid_argument("encode: dimension mismatch");
  }
  Var input = tape.constant(concat_cols({&next_states, &next_actions}));
  return gaussian_head(mlp_forward(tape, enc.params, enc.config, input));
}

Tensor encode_mean(const IntentionEncoder& enc, const Tensor& next_states,
                   const Tensor& next_actions) {
  if (next_states.cols() != enc.state_dim || next_actions.cols() != enc.action_dim) {
    throw std::invalid_argument("encode: dimension mismatch");
  }
  Tensor out = mlp_forward(enc.params, enc.config, concat_cols({&next_states, &next_actions}));
  Tensor mean = Tensor::matrix(out.rows(), enc.latent_dim);
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < enc.latent_dim; ++c) mean.at(r, c) = out.at(r, c);
  return mean;
}

ElboTerms elbo_objective(Tape& tape, const VectorFieldModel& vf, const VectorFieldModel& target,
                         const IntentionEncoder& enc, const FlowBatch& batch,
                         const Tensor& latent_noise, double gamma, const ElboConfig& config,
                         std::size_t steps) {
  if (!(config.kl_coef >= 0.0)) throw std::invalid_argument("elbo: kl_coef must be >= 0");
  if (vf.latent_dim != enc.latent_dim) throw std::invalid_argument("elbo: latent dims differ");
  GaussianParams posterior = encode(tape, enc, batch.next_states, batch.next_actions);
  Var z = gaussian_sample(posterior, latent_noise);
  if (config.block_latent_grad) z = detach(z);
  FlowLoss flow = sarsa_flow_loss(tape, vf, target, batch, z, gamma, steps, config.target_latents);
  Var kl = mean(kl_to_standard_normal(posterior));

  ElboTerms out;
  out.flow_current = flow.current;
  out.flow_future = flow.future;
  out.kl = kl.value().item();
  out.latents = z.value();
  out.total = flow.total + config.kl_coef * kl;
  return out;
}

Tensor prior_sample(std::size_t rows, std::size_t latent_dim, Rng& rng) {
  if (latent_dim == 0) throw std::invalid_argument("prior_sample: latent_dim must be >= 1");
  return rng.normal_tensor(rows, latent_dim);
}

}  // namespace infom
