#include "infom/flow.hpp"

#include <stdexcept>

#include "infom/kernels.hpp"

namespace infom {

namespace {

void check_time(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("flow time must be in [0, 1]");
}

void check_rows(const Tensor& x, std::size_t rows, std::size_t cols, const char* what) {
  if (x.rank() != 2 || x.rows() != rows || x.cols() != cols) {
    throw std::invalid_argument(std::string(what) + ": expected [" + std::to_string(rows) + "," +
                                std::to_string(cols) + "], got " + x.shape_string());
  }
}

Tensor time_column(std::size_t rows, double t) { return Tensor::matrix(rows, 1, t); }

// One Euler step x + h * v, written the same way in both paths so they agree
// bit for bit.
void euler_update(Tensor& x, const Tensor& v, double h) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = x[i] + h * v[i];
}

}  // namespace

VectorFieldModel VectorFieldModel::create(std::size_t state_dim, std::size_t action_dim,
                                          std::size_t latent_dim,
                                          const std::vector<std::size_t>& hidden, Rng& rng) {
  VectorFieldModel vf;
  vf.state_dim = state_dim;
  vf.action_dim = action_dim;
  vf.latent_dim = latent_dim;
  vf.config = MlpConfig{1 + 2 * state_dim + action_dim + latent_dim, hidden, state_dim, true,
                        Activation::Gelu};
  vf.params = init_mlp(vf.config, rng);
  return vf;
}

Tensor velocity(const VectorFieldModel& vf, const Tensor& t, const Tensor& x, const Tensor& s,
                const Tensor& a, const Tensor& z) {
  const std::size_t b = x.rows();
  check_rows(t, b, 1, "velocity t");
  check_rows(x, b, vf.state_dim, "velocity x");
  check_rows(s, b, vf.state_dim, "velocity s");
  check_rows(a, b, vf.action_dim, "velocity a");
  check_rows(z, b, vf.latent_dim, "velocity z");
  return mlp_forward(vf.params, vf.config, concat_cols({&t, &x, &s, &a, &z}));
}

Var velocity(Tape& tape, const VectorFieldModel& vf, Var t, Var x, Var s, Var a, Var z) {
  const std::size_t b = x.rows();
  check_rows(t.value(), b, 1, "velocity t");
  check_rows(x.value(), b, vf.state_dim, "velocity x");
  check_rows(s.value(), b, vf.state_dim, "velocity s");
  check_rows(a.value(), b, vf.action_dim, "velocity a");
  check_rows(z.value(), b, vf.latent_dim, "velocity z");
  return mlp_forward(tape, vf.params, vf.config, concat_cols({t, x, s, a, z}));
}

std::vector<double> interpolate(std::span<const double> x, std::span<const double> eps, double t) {
  check_time(t);
  if (x.size() != eps.size()) throw std::invalid_argument("interpolate: dimension mismatch");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = t * x[i] + (1.0 - t) * eps[i];
  return out;
}

Tensor interpolate(const Tensor& x, const Tensor& eps, const Tensor& t) {
  if (!x.same_shape(eps)) throw std::invalid_argument("interpolate: shape mismatch");
  check_rows(t, x.rows(), 1, "interpolate t");
  Tensor out = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double tr = t[r];
    check_time(tr);
    for (std::size_t c = 0; c < x.cols(); ++c) out.at(r, c) = tr * x.at(r, c) + (1.0 - tr) * eps.at(r, c);
  }
  return out;
}

Tensor euler_integrate(const Tensor& eps, std::size_t steps, const VelocityFn& v) {
  if (steps == 0) throw std::invalid_argument("euler: need at least one step");
  const double h = 1.0 / static_cast<double>(steps);
  Tensor x = eps;
  for (std::size_t k = 0; k < steps; ++k) {
    Tensor vel = v(static_cast<double>(k) * h, x);
    if (!vel.same_shape(x)) throw std::invalid_argument("euler: velocity shape mismatch");
    euler_update(x, vel, h);
    kernels::check_finite(x, "euler_sample");
  }
  return x;
}

Tensor euler_sample(const VectorFieldModel& vf, const Tensor& eps, const Tensor& s,
                    const Tensor& a, const Tensor& z, std::size_t steps) {
  const std::size_t b = eps.rows();
  return euler_integrate(eps, steps, [&](double t, const Tensor& x) {
    return velocity(vf, time_column(b, t), x, s, a, z);
  });
}

Var euler_sample(Tape& tape, const VectorFieldModel& vf, const Tensor& eps, Var s, Var a, Var z,
                 std::size_t steps) {
  if (steps == 0) throw std::invalid_argument("euler: need at least one step");
  const double h = 1.0 / static_cast<double>(steps);
  const std::size_t b = eps.rows();
  Var x = tape.constant(eps);
  for (std::size_t k = 0; k < steps; ++k) {
    Var t = tape.constant(time_column(b, static_cast<double>(k) * h));
    x = x + h * velocity(tape, vf, t, x, s, a, z);
  }
  return x;
}

void FlowBatch::validate() const {
  const std::size_t b = size();
  if (b == 0) throw std::invalid_argument("FlowBatch: empty");
  if (actions.rows() != b || next_states.rows() != b || next_actions.rows() != b ||
      times.rows() != b || noise.rows() != b || times.cols() != 1 ||
      !noise.same_shape(states) || !next_states.same_shape(states) ||
      !next_actions.same_shape(actions)) {
    throw std::invalid_argument("FlowBatch: misaligned arrays");
  }
  for (double t : times.data()) check_time(t);
}

FlowBatch FlowBatch::from(const TransitionBatch& batch, Rng& time_rng, Rng& noise_rng) {
  FlowBatch fb{batch.states, batch.actions, batch.next_states, batch.next_actions,
               time_rng.uniform_tensor(batch.size(), 1),
               noise_rng.normal_tensor(batch.size(), batch.states.cols())};
  return fb;
}

Var cfm_loss(Tape& tape, const VectorFieldModel& vf, const Tensor& x, const Tensor& s,
             const Tensor& a, Var z, const Tensor& t, const Tensor& eps) {
  if (x.rows() == 0) throw std::invalid_argument("cfm_loss: empty batch");
  Tensor xt = interpolate(x, eps, t);
  Tensor target = x;
  for (std::size_t i = 0; i < target.size(); ++i) target[i] -= eps[i];
  Var v = velocity(tape, vf, tape.constant(t), tape.constant(std::move(xt)), tape.constant(s),
                   tape.constant(a), z);
  return mean(row_sum(square(v - tape.constant(std::move(target)))));
}

namespace {

FlowLoss flow_loss_with_next_actions(Tape& tape, const VectorFieldModel& vf,
                                     const VectorFieldModel& target, const FlowBatch& batch,
                                     const Tensor& next_actions, Var z, double gamma,
                                     std::size_t steps, const Tensor* target_latents) {
  batch.validate();
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in [0, 1)");
  check_rows(next_actions, batch.size(), vf.action_dim, "next actions");
  Var current = cfm_loss(tape, vf, batch.states, batch.states, batch.actions, z, batch.times,
                         batch.noise);

  const Tensor& z_value = target_latents ? *target_latents : z.value();
  check_rows(z_value, batch.size(), vf.latent_dim, "target latents");
  Tensor future_state =
      euler_sample(target, batch.noise, batch.next_states, next_actions, z_value, steps);
  Tensor ft = interpolate(future_state, batch.noise, batch.times);
  Tensor target_v = velocity(target, batch.times, ft, batch.next_states, next_actions, z_value);
  Var v = velocity(tape, vf, tape.constant(batch.times), tape.constant(std::move(ft)),
                   tape.constant(batch.states), tape.constant(batch.actions), z);
  Var future = mean(row_sum(square(v - tape.constant(std::move(target_v)))));

  FlowLoss out;
  out.current = current.value().item();
  out.future = future.value().item();
  out.total = (1.0 - gamma) * current + gamma * future;
  return out;
}

}  // namespace

FlowLoss sarsa_flow_loss(Tape& tape, const VectorFieldModel& vf, const VectorFieldModel& target,
                         const FlowBatch& batch, Var z, double gamma, std::size_t steps,
                         const Tensor* target_latents) {
  return flow_loss_with_next_actions(tape, vf, target, batch, batch.next_actions, z, gamma, steps,
                                     target_latents);
}

FlowLoss td_flow_loss(Tape& tape, const VectorFieldModel& vf, const VectorFieldModel& target,
                      const FlowBatch& batch, Var z, const TargetPolicy& policy, double gamma,
                      std::size_t steps) {
  Tensor next_actions = policy(batch.next_states);
  return flow_loss_with_next_actions(tape, vf, target, batch, next_actions, z, gamma, steps, nullptr);
}

}  // namespace infom
