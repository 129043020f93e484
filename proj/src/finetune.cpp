#include "infom/finetune.hpp"

#include <stdexcept>

namespace infom {

namespace {

void check_gamma(double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in [0, 1)");
}

void select_rows(const Tensor& x, std::size_t first, std::size_t count, Tensor& out,
                 std::size_t out_first) {
  for (std::size_t r = 0; r < count; ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out.at(out_first + r, c) = x.at(first + r, c);
}

}  // namespace

RewardPredictor RewardPredictor::create(std::size_t state_dim,
                                        const std::vector<std::size_t>& hidden, Rng& rng) {
  RewardPredictor pred;
  pred.config = MlpConfig{state_dim, hidden, 1, true, Activation::Gelu};
  pred.params = init_mlp(pred.config, rng);
  return pred;
}

Var RewardPredictor::predict(Tape& tape, Var states) const {
  return mlp_forward(tape, params, config, states);
}

Tensor RewardPredictor::predict(const Tensor& states) const {
  return mlp_forward(params, config, states);
}

Critic Critic::create(std::size_t state_dim, std::size_t action_dim,
                      const std::vector<std::size_t>& hidden, Rng& rng) {
  Critic critic;
  critic.config = MlpConfig{state_dim + action_dim, hidden, 1, true, Activation::Gelu};
  for (const char* head : {"q0/", "q1/"}) critic.params.merge(init_mlp(critic.config, rng, head));
  return critic;
}

std::pair<Var, Var> Critic::heads(Tape& tape, Var states, Var actions) const {
  Var input = concat_cols({states, actions});
  return {mlp_forward(tape, params, config, input, "q0/"),
          mlp_forward(tape, params, config, input, "q1/")};
}

Var Critic::min_q(Tape& tape, Var states, Var actions) const {
  auto [q0, q1] = heads(tape, states, actions);
  return minimum(q0, q1);
}

Tensor Critic::min_q(const Tensor& states, const Tensor& actions) const {
  Tensor input = concat_cols({&states, &actions});
  Tensor q0 = mlp_forward(params, config, input, "q0/");
  Tensor q1 = mlp_forward(params, config, input, "q1/");
  for (std::size_t i = 0; i < q0.size(); ++i) q0[i] = q1[i] < q0[i] ? q1[i] : q0[i];
  return q0;
}

void FinetuneConfig::validate() const {
  if (num_future_samples == 0) throw std::invalid_argument("finetune: N must be >= 1");
  if (!(expectile >= 0.5 && expectile < 1.0)) throw std::invalid_argument("finetune: expectile must be in [0.5, 1)");
  if (!(alpha >= 0.0)) throw std::invalid_argument("finetune: alpha must be >= 0");
  if (gpi_latents == 0) throw std::invalid_argument("finetune: M must be >= 1");
  if (actor_every == 0) throw std::invalid_argument("finetune: actor_every must be >= 1");
  if (euler_steps == 0) throw std::invalid_argument("finetune: euler_steps must be >= 1");
}

Var reward_loss(Tape& tape, const RewardPredictor& pred, const TransitionBatch& batch) {
  if (!batch.labeled) throw std::invalid_argument("reward_loss: batch has no reward labels");
  Var r = pred.predict(tape, tape.constant(batch.states));
  return mean(square(r - tape.constant(batch.rewards)));
}

Tensor estimate_q_z(const VectorFieldModel& vf, const RewardPredictor& pred, const Tensor& s,
                    const Tensor& a, const Tensor& z, const Tensor& noise,
                    std::size_t num_samples, double gamma, std::size_t steps) {
  check_gamma(gamma);
  if (num_samples == 0) throw std::invalid_argument("estimate_q_z: N must be >= 1");
  const std::size_t b = s.rows();
  if (noise.rows() != b * num_samples || noise.cols() != vf.state_dim)
    throw std::invalid_argument("estimate_q_z: noise must be [B * N, state_dim]");
  Tensor futures = euler_sample(vf, noise, repeat_rows(s, num_samples), repeat_rows(a, num_samples),
                                repeat_rows(z, num_samples), steps);
  Tensor r = pred.predict(futures);
  Tensor q = Tensor::matrix(b, 1);
  const double scale = 1.0 / ((1.0 - gamma) * static_cast<double>(num_samples));
  for (std::size_t row = 0; row < b; ++row) {
    double total = 0.0;
    for (std::size_t i = 0; i < num_samples; ++i) total += r[row * num_samples + i];
    q[row] = total * scale;
  }
  return q;
}

Tensor estimate_q_z(const VectorFieldModel& vf, const RewardPredictor& pred, const Tensor& s,
                    const Tensor& a, const Tensor& z, std::size_t num_samples, double gamma,
                    std::size_t steps, Rng& rng) {
  Tensor noise = rng.normal_tensor(s.rows() * num_samples, vf.state_dim);
  return estimate_q_z(vf, pred, s, a, z, noise, num_samples, gamma, steps);
}

double expectile_loss(double x, double mu) {
  if (!(mu >= 0.5 && mu < 1.0)) throw std::invalid_argument("expectile_loss: mu must be in [0.5, 1)");
  return (x < 0.0 ? 1.0 - mu : mu) * x * x;
}

Var critic_distillation_loss(Tape& tape, const Critic& critic, const Tensor& s, const Tensor& a,
                             const Tensor& q_targets, double mu) {
  if (q_targets.rows() != s.rows() || q_targets.cols() != 1)
    throw std::invalid_argument("critic_distillation_loss: targets must be [B, 1]");
  auto [q0, q1] = critic.heads(tape, tape.constant(s), tape.constant(a));
  Var target = tape.constant(q_targets);
  return mean(expectile(target - q0, mu)) + mean(expectile(target - q1, mu));
}

Var actor_loss(Tape& tape, const PolicyModel& policy, const Critic& critic, const Tensor& s,
               const Tensor& dataset_actions, const Tensor& policy_noise, double alpha) {
  if (!(alpha >= 0.0)) throw std::invalid_argument("actor_loss: alpha must be >= 0");
  GaussianParams dist = policy.distribution(tape, s);
  Var a_pi = gaussian_sample(dist, policy_noise);
  Var q = critic.min_q(tape, tape.constant(s), a_pi);
  Var log_prob = gaussian_log_prob(dist, tape.constant(dataset_actions));
  return -(mean(q) + alpha * mean(log_prob));
}

Var naive_gpi_objective(Tape& tape, const PolicyModel& policy, const VectorFieldModel& vf,
                        const RewardPredictor& pred, const Tensor& s,
                        const Tensor& dataset_actions, const NaiveGpiInputs& inputs,
                        std::size_t num_latents, std::size_t num_samples, double alpha,
                        double gamma, std::size_t steps) {
  check_gamma(gamma);
  if (num_latents == 0 || num_samples == 0) throw std::invalid_argument("naive_gpi: M and N must be >= 1");
  if (!(alpha >= 0.0)) throw std::invalid_argument("naive_gpi: alpha must be >= 0");
  const std::size_t b = s.rows(), m = num_latents, n = num_samples;
  if (inputs.latents.rows() != b * m || inputs.future_noise.rows() != b * m * n)
    throw std::invalid_argument("naive_gpi: latent/noise rows do not match B * M (* N)");

  GaussianParams dist = policy.distribution(tape, s);
  Var a_pi = gaussian_sample(dist, inputs.policy_noise);

  // Score every candidate without a tape and keep the best per row.
  Tensor q_all = estimate_q_z(vf, pred, repeat_rows(s, m), repeat_rows(a_pi.value(), m),
                              inputs.latents, inputs.future_noise, n, gamma, steps);
  Tensor best_z = Tensor::matrix(b * n, inputs.latents.cols());
  Tensor best_noise = Tensor::matrix(b * n, vf.state_dim);
  for (std::size_t row = 0; row < b; ++row) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < m; ++j)
      if (q_all[row * m + j] > q_all[row * m + best]) best = j;
    for (std::size_t i = 0; i < n; ++i)
      select_rows(inputs.latents, row * m + best, 1, best_z, row * n + i);
    select_rows(inputs.future_noise, (row * m + best) * n, n, best_noise, row * n);
  }

  Var futures = euler_sample(tape, vf, best_noise, tape.constant(repeat_rows(s, n)),
                             repeat_rows(a_pi, n), tape.constant(std::move(best_z)), steps);
  // Equal group sizes: the mean over all B * N rows is the mean over rows of
  // each row's N-sample average.
  Var q = (1.0 / (1.0 - gamma)) * mean(pred.predict(tape, futures));
  Var log_prob = gaussian_log_prob(dist, tape.constant(dataset_actions));
  return -(q + alpha * mean(log_prob));
}

OneStepLosses one_step_pi_losses(Tape& critic_tape, Tape& actor_tape, const Critic& critic,
                                 const PolicyModel& policy, const VectorFieldModel& vf,
                                 const RewardPredictor& pred, const Tensor& s,
                                 const Tensor& dataset_actions, const Tensor& future_noise,
                                 const Tensor& policy_noise, std::size_t num_samples,
                                 double alpha, double gamma, std::size_t steps) {
  Tensor zero_z = Tensor::matrix(s.rows(), vf.latent_dim, 0.0);
  Tensor target = estimate_q_z(vf, pred, s, dataset_actions, zero_z, future_noise, num_samples,
                               gamma, steps);
  auto [q0, q1] = critic.heads(critic_tape, critic_tape.constant(s),
                               critic_tape.constant(dataset_actions));
  Var t = critic_tape.constant(std::move(target));
  OneStepLosses out;
  out.critic = mean(square(t - q0)) + mean(square(t - q1));
  out.actor = actor_loss(actor_tape, policy, critic, s, dataset_actions, policy_noise, alpha);
  return out;
}

}  // namespace infom
