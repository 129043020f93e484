#pragma once

#include <span>
#include <vector>

#include "infom/random.hpp"
#include "infom/tensor.hpp"

namespace infom {

/// Action distribution per state: policy[s][a].
using PolicyTable = std::vector<std::vector<double>>;

/// Finite MDP with state-only rewards. Continuous models see states and
/// actions through their embeddings; generated vectors are mapped back to
/// the nearest embedding.
struct TabularMdp {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  /// transitions[s][a][s'] = P(s' | s, a)
  std::vector<std::vector<std::vector<double>>> transitions;
  std::vector<double> reward;
  std::vector<double> initial;
  Tensor state_embeddings;   // [n_states, state_dim]
  Tensor action_embeddings;  // [n_actions, action_dim]
  double gamma = 0.99;

  void validate() const;

  std::size_t state_dim() const { return state_embeddings.cols(); }
  std::size_t action_dim() const { return action_embeddings.cols(); }
  std::size_t decode_state(std::span<const double> x) const;
  std::size_t decode_action(std::span<const double> a) const;
  std::size_t sample_next(std::size_t s, std::size_t a, Rng& rng) const;
};

void validate_policy(const TabularMdp& mdp, const PolicyTable& policy);

/// Per-intention behavioral policies with mixture weights.
struct IntentionedBehavior {
  std::vector<PolicyTable> policies;
  std::vector<double> weights;

  std::size_t size() const { return policies.size(); }
  void validate(const TabularMdp& mdp) const;
  /// Mixture of the intention policies, weighted per state.
  PolicyTable average_policy() const;
};

/// Row (s * n_actions + a) holds p_gamma(. | s, a) over states, solved
/// exactly from p = (1 - gamma) D + gamma M p.
Tensor exact_occupancy(const TabularMdp& mdp, const PolicyTable& policy, double gamma);
/// Q[s, a] = 1/(1 - gamma) * sum_f p_gamma(f | s, a) r(f).
Tensor exact_q(const TabularMdp& mdp, const PolicyTable& policy, double gamma);
/// Q from the reward Bellman equation Q = R + gamma M Q; independent of the
/// occupancy solve, used as a cross-check.
Tensor bellman_q(const TabularMdp& mdp, const PolicyTable& policy, double gamma);
/// Max-norm residual of the occupancy Bellman equation.
double occupancy_residual(const TabularMdp& mdp, const PolicyTable& policy, double gamma,
                          const Tensor& occupancy);

double total_variation(std::span<const double> p, std::span<const double> q);

/// Seeded, well separated embeddings: orthonormal directions when
/// n <= dim, evenly spaced circle points for dim 2, rejection sampling
/// otherwise. Every pair is at least `min_separation` apart.
Tensor make_embeddings(std::size_t n, std::size_t dim, Rng& rng, double min_separation = 0.5);

/// Dense random MDP for oracle checks: transitions and initial distribution
/// from normalized uniforms, rewards uniform on [0, 1].
TabularMdp random_mdp(std::size_t n_states, std::size_t n_actions, double gamma, Rng& rng);
PolicyTable random_policy(const TabularMdp& mdp, Rng& rng);

}  // namespace infom
