#include "infom/tabular.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace infom {

namespace {

void check_distribution(std::span<const double> p, std::size_t expected, const std::string& what) {
  if (p.size() != expected) throw std::invalid_argument(what + ": wrong length");
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument(what + ": negative or non-finite entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument(what + ": does not sum to 1");
}

void check_gamma(double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in [0, 1)");
}

std::size_t nearest_row(const Tensor& table, std::span<const double> x) {
  if (x.size() != table.cols()) throw std::invalid_argument("decode: dimension mismatch");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < table.rows(); ++r) {
    double d = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) {
      const double diff = x[c] - table.at(r, c);
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = r;
    }
  }
  return best;
}

// M[(s,a), (s',a')] = P(s'|s,a) pi(a'|s')
Eigen::MatrixXd pair_transition(const TabularMdp& mdp, const PolicyTable& policy) {
  const std::size_t S = mdp.n_states, A = mdp.n_actions;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(S * A, S * A);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a)
      for (std::size_t n = 0; n < S; ++n) {
        const double p = mdp.transitions[s][a][n];
        if (p == 0.0) continue;
        for (std::size_t b = 0; b < A; ++b) m(s * A + a, n * A + b) = p * policy[n][b];
      }
  return m;
}

Tensor to_tensor(const Eigen::MatrixXd& m) {
  Tensor out = Tensor::matrix(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.at(r, c) = m(r, c);
  return out;
}

}  // namespace

void TabularMdp::validate() const {
  if (n_states == 0 || n_actions == 0) throw std::invalid_argument("TabularMdp: empty state or action set");
  if (transitions.size() != n_states) throw std::invalid_argument("TabularMdp: transition table size");
  for (std::size_t s = 0; s < n_states; ++s) {
    if (transitions[s].size() != n_actions) throw std::invalid_argument("TabularMdp: transition table size");
    for (std::size_t a = 0; a < n_actions; ++a) {
      check_distribution(transitions[s][a], n_states,
                         "P[" + std::to_string(s) + "][" + std::to_string(a) + "]");
    }
  }
  if (reward.size() != n_states) throw std::invalid_argument("TabularMdp: reward size");
  check_distribution(initial, n_states, "initial distribution");
  check_gamma(gamma);
  if (state_embeddings.rank() != 2 || state_embeddings.rows() != n_states)
    throw std::invalid_argument("TabularMdp: state embeddings must be [n_states, dim]");
  if (action_embeddings.rank() != 2 || action_embeddings.rows() != n_actions)
    throw std::invalid_argument("TabularMdp: action embeddings must be [n_actions, dim]");
  for (const Tensor* table : {&state_embeddings, &action_embeddings}) {
    for (std::size_t i = 0; i < table->rows(); ++i)
      for (std::size_t j = i + 1; j < table->rows(); ++j) {
        double d = 0.0;
        for (std::size_t c = 0; c < table->cols(); ++c) {
          const double diff = table->at(i, c) - table->at(j, c);
          d += diff * diff;
        }
        if (!(d > 0.0)) throw std::invalid_argument("TabularMdp: duplicate embeddings");
      }
  }
}

std::size_t TabularMdp::decode_state(std::span<const double> x) const {
  return nearest_row(state_embeddings, x);
}

std::size_t TabularMdp::decode_action(std::span<const double> a) const {
  return nearest_row(action_embeddings, a);
}

std::size_t TabularMdp::sample_next(std::size_t s, std::size_t a, Rng& rng) const {
  return rng.categorical(transitions.at(s).at(a));
}

void validate_policy(const TabularMdp& mdp, const PolicyTable& policy) {
  if (policy.size() != mdp.n_states) throw std::invalid_argument("policy: wrong number of states");
  for (std::size_t s = 0; s < mdp.n_states; ++s)
    check_distribution(policy[s], mdp.n_actions, "policy row " + std::to_string(s));
}

void IntentionedBehavior::validate(const TabularMdp& mdp) const {
  if (policies.empty()) throw std::invalid_argument("IntentionedBehavior: no intentions");
  if (weights.size() != policies.size())
    throw std::invalid_argument("IntentionedBehavior: one weight per intention");
  check_distribution(weights, policies.size(), "intention weights");
  for (const PolicyTable& p : policies) validate_policy(mdp, p);
}

PolicyTable IntentionedBehavior::average_policy() const {
  PolicyTable out = policies.at(0);
  for (auto& row : out)
    for (double& v : row) v = 0.0;
  for (std::size_t k = 0; k < policies.size(); ++k)
    for (std::size_t s = 0; s < out.size(); ++s)
      for (std::size_t a = 0; a < out[s].size(); ++a) out[s][a] += weights[k] * policies[k][s][a];
  return out;
}

Tensor exact_occupancy(const TabularMdp& mdp, const PolicyTable& policy, double gamma) {
  check_gamma(gamma);
  validate_policy(mdp, policy);
  const std::size_t S = mdp.n_states, A = mdp.n_actions;
  Eigen::MatrixXd m = pair_transition(mdp, policy);
  Eigen::MatrixXd system = Eigen::MatrixXd::Identity(S * A, S * A) - gamma * m;
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(S * A, S);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) d(s * A + a, s) = 1.0 - gamma;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
  Eigen::MatrixXd occ = lu.solve(d);
  if (!occ.allFinite()) throw std::logic_error("exact_occupancy: singular system");
  return to_tensor(occ);
}

Tensor exact_q(const TabularMdp& mdp, const PolicyTable& policy, double gamma) {
  Tensor occ = exact_occupancy(mdp, policy, gamma);
  const std::size_t S = mdp.n_states, A = mdp.n_actions;
  Tensor q = Tensor::matrix(S, A);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) {
      double total = 0.0;
      for (std::size_t f = 0; f < S; ++f) total += occ.at(s * A + a, f) * mdp.reward[f];
      q.at(s, a) = total / (1.0 - gamma);
    }
  return q;
}

Tensor bellman_q(const TabularMdp& mdp, const PolicyTable& policy, double gamma) {
  check_gamma(gamma);
  validate_policy(mdp, policy);
  const std::size_t S = mdp.n_states, A = mdp.n_actions;
  Eigen::MatrixXd m = pair_transition(mdp, policy);
  Eigen::VectorXd r(S * A);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) r(s * A + a) = mdp.reward[s];
  Eigen::VectorXd q =
      (Eigen::MatrixXd::Identity(S * A, S * A) - gamma * m).colPivHouseholderQr().solve(r);
  Tensor out = Tensor::matrix(S, A);
  for (std::size_t i = 0; i < S * A; ++i) out[i] = q(i);
  return out;
}

double occupancy_residual(const TabularMdp& mdp, const PolicyTable& policy, double gamma,
                          const Tensor& occupancy) {
  const std::size_t S = mdp.n_states, A = mdp.n_actions;
  Eigen::MatrixXd m = pair_transition(mdp, policy);
  Eigen::MatrixXd p(S * A, S);
  for (std::size_t r = 0; r < S * A; ++r)
    for (std::size_t c = 0; c < S; ++c) p(r, c) = occupancy.at(r, c);
  Eigen::MatrixXd rhs = gamma * m * p;
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) rhs(s * A + a, s) += 1.0 - gamma;
  return (p - rhs).cwiseAbs().maxCoeff();
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("total_variation: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += std::abs(p[i] - q[i]);
  return 0.5 * total;
}

Tensor make_embeddings(std::size_t n, std::size_t dim, Rng& rng, double min_separation) {
  if (n == 0 || dim == 0) throw std::invalid_argument("make_embeddings: empty");
  Tensor out = Tensor::matrix(n, dim);
  if (n <= dim) {
    // Gram-Schmidt on Gaussian vectors; pairwise distance sqrt(2).
    for (std::size_t i = 0; i < n; ++i) {
      for (;;) {
        std::vector<double> v(dim);
        for (double& x : v) x = rng.normal();
        for (std::size_t j = 0; j < i; ++j) {
          double dot = 0.0;
          for (std::size_t c = 0; c < dim; ++c) dot += v[c] * out.at(j, c);
          for (std::size_t c = 0; c < dim; ++c) v[c] -= dot * out.at(j, c);
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-6) continue;
        for (std::size_t c = 0; c < dim; ++c) out.at(i, c) = v[c] / norm;
        break;
      }
    }
    return out;
  }
  if (dim == 2) {
    const double phase = 2.0 * std::numbers::pi * rng.uniform();
    for (std::size_t i = 0; i < n; ++i) {
      const double angle = phase + 2.0 * std::numbers::pi * static_cast<double>(i) / n;
      out.at(i, 0) = std::cos(angle);
      out.at(i, 1) = std::sin(angle);
    }
    return out;
  }
  for (std::size_t attempt = 0; attempt < 100000; ++attempt) {
    for (double& v : out.data()) v = rng.normal() / std::sqrt(static_cast<double>(dim));
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i)
      for (std::size_t j = i + 1; j < n && ok; ++j) {
        double d = 0.0;
        for (std::size_t c = 0; c < dim; ++c) d += std::pow(out.at(i, c) - out.at(j, c), 2);
        ok = std::sqrt(d) >= min_separation;
      }
    if (ok) return out;
  }
  throw std::runtime_error("make_embeddings: could not reach the requested separation");
}

TabularMdp random_mdp(std::size_t n_states, std::size_t n_actions, double gamma, Rng& rng) {
  TabularMdp mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.gamma = gamma;
  auto simplex = [&](std::size_t n) {
    std::vector<double> p(n);
    double total = 0.0;
    for (double& v : p) total += (v = rng.uniform() + 1e-3);
    for (double& v : p) v /= total;
    return p;
  };
  mdp.transitions.assign(n_states, {});
  for (auto& row : mdp.transitions)
    for (std::size_t a = 0; a < n_actions; ++a) row.push_back(simplex(n_states));
  mdp.reward.resize(n_states);
  for (double& r : mdp.reward) r = rng.uniform();
  mdp.initial = simplex(n_states);
  mdp.state_embeddings = make_embeddings(n_states, 2, rng);
  mdp.action_embeddings = make_embeddings(n_actions, std::max<std::size_t>(1, n_actions), rng);
  mdp.validate();
  return mdp;
}

PolicyTable random_policy(const TabularMdp& mdp, Rng& rng) {
  PolicyTable policy(mdp.n_states, std::vector<double>(mdp.n_actions));
  for (auto& row : policy) {
    double total = 0.0;
    for (double& v : row) total += (v = rng.uniform() + 1e-3);
    for (double& v : row) v /= total;
  }
  return policy;
}

}  // namespace infom
