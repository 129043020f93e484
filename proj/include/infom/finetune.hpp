#pragma once

#include <utility>

#include "infom/flow.hpp"
#include "infom/nets.hpp"

namespace infom {

/// r_eta(s): state -> scalar.
struct RewardPredictor {
  MlpConfig config;
  ParamSet params;

  static RewardPredictor create(std::size_t state_dim, const std::vector<std::size_t>& hidden,
                                Rng& rng);
  Var predict(Tape& tape, Var states) const;
  Tensor predict(const Tensor& states) const;
};

/// Two independent Q heads over concat(s, a), parameters prefixed "q0/" and
/// "q1/". Aggregated by minimum.
struct Critic {
  MlpConfig config;
  ParamSet params;

  static Critic create(std::size_t state_dim, std::size_t action_dim,
                       const std::vector<std::size_t>& hidden, Rng& rng);
  std::pair<Var, Var> heads(Tape& tape, Var states, Var actions) const;
  Var min_q(Tape& tape, Var states, Var actions) const;
  Tensor min_q(const Tensor& states, const Tensor& actions) const;
};

struct FinetuneConfig {
  std::size_t num_future_samples = 16;  // N
  double expectile = 0.9;               // mu
  double alpha = 0.3;                   // BC coefficient
  std::size_t gpi_latents = 32;         // M
  std::size_t actor_every = 4;
  std::size_t euler_steps = 10;         // T

  void validate() const;
};

/// Mean squared error of r_eta(s) against labeled rewards.
Var reward_loss(Tape& tape, const RewardPredictor& pred, const TransitionBatch& batch);

/// Q_z(s, a) = 1/((1 - gamma) N) sum_i r_eta(sf_i), sf_i integrated from
/// noise rows b * N + i of `noise` ([B * N, state_dim]). Untaped: no
/// gradient reaches the vector field. Returns [B, 1].
Tensor estimate_q_z(const VectorFieldModel& vf, const RewardPredictor& pred, const Tensor& s,
                    const Tensor& a, const Tensor& z, const Tensor& noise,
                    std::size_t num_samples, double gamma, std::size_t steps);
/// Same estimate with the noise drawn from `rng`.
Tensor estimate_q_z(const VectorFieldModel& vf, const RewardPredictor& pred, const Tensor& s,
                    const Tensor& a, const Tensor& z, std::size_t num_samples, double gamma,
                    std::size_t steps, Rng& rng);

/// |mu - 1(x < 0)| x^2.
double expectile_loss(double x, double mu);

/// sum over both heads of mean_b L_mu(q_target - Q_head(s, a)).
Var critic_distillation_loss(Tape& tape, const Critic& critic, const Tensor& s, const Tensor& a,
                             const Tensor& q_targets, double mu);

/// -mean[min_head Q(s, a_pi) + alpha log pi(a | s)], a_pi = mean(s) + noise.
Var actor_loss(Tape& tape, const PolicyModel& policy, const Critic& critic, const Tensor& s,
               const Tensor& dataset_actions, const Tensor& policy_noise, double alpha);

struct NaiveGpiInputs {
  Tensor latents;       // [B * M, d], row b * M + j is candidate j of row b
  Tensor future_noise;  // [B * M * N, state_dim], shared layout with estimate_q_z
  Tensor policy_noise;  // [B, action_dim]
};

/// -mean[max_j Q_{z_j}(s, a_pi) + alpha log pi(a | s)] where Q_{z_j} is the
/// generative estimate composed differentiably through the Euler solver and
/// the reward predictor. The max is selected without a tape; the gradient
/// flows through the winning candidate's samples only.
Var naive_gpi_objective(Tape& tape, const PolicyModel& policy, const VectorFieldModel& vf,
                        const RewardPredictor& pred, const Tensor& s,
                        const Tensor& dataset_actions, const NaiveGpiInputs& inputs,
                        std::size_t num_latents, std::size_t num_samples, double alpha,
                        double gamma, std::size_t steps);

struct OneStepLosses {
  Var critic;
  Var actor;
};

/// Critic regresses both heads onto 1/(1 - gamma) * mean_i r_eta(sf_i) with
/// sf_i from an unconditioned field (zero latent); actor as actor_loss.
/// The two losses live on separate tapes.
OneStepLosses one_step_pi_losses(Tape& critic_tape, Tape& actor_tape, const Critic& critic,
                                 const PolicyModel& policy, const VectorFieldModel& vf,
                                 const RewardPredictor& pred, const Tensor& s,
                                 const Tensor& dataset_actions, const Tensor& future_noise,
                                 const Tensor& policy_noise, std::size_t num_samples,
                                 double alpha, double gamma, std::size_t steps);

}  // namespace infom
