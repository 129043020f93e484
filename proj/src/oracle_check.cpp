#include "infom/oracle_check.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "infom/pipeline.hpp"

namespace infom {

void OracleReport::add(std::string name, double value, double threshold) {
  entries.push_back({std::move(name), value, threshold, value < threshold});
}

bool OracleReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const ReportEntry& e) { return e.pass; });
}

std::string OracleReport::to_text() const {
  std::ostringstream out;
  out.precision(6);
  for (const ReportEntry& e : entries)
    out << (e.pass ? "PASS " : "FAIL ") << e.name << " value=" << e.value << " threshold=" << e.threshold << "\n";
  return out.str();
}

std::vector<bool> reachable_states(const TabularMdp& mdp, const PolicyTable& policy) {
  std::vector<bool> seen(mdp.n_states, false);
  std::vector<std::size_t> frontier;
  for (std::size_t s = 0; s < mdp.n_states; ++s)
    if (mdp.initial[s] > 0.0) {
      seen[s] = true;
      frontier.push_back(s);
    }
  while (!frontier.empty()) {
    const std::size_t s = frontier.back();
    frontier.pop_back();
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      if (policy[s][a] <= 0.0) continue;
      for (std::size_t f = 0; f < mdp.n_states; ++f)
        if (mdp.transitions[s][a][f] > 0.0 && !seen[f]) {
          seen[f] = true;
          frontier.push_back(f);
        }
    }
  }
  return seen;
}

std::vector<OccupancyComparison> occupancy_tv(const VectorFieldModel& vf, const TabularMdp& mdp,
                                              const PolicyTable& policy, const Tensor& z,
                                              double gamma, std::size_t samples,
                                              std::size_t steps, Rng& rng) {
  if (samples == 0) throw std::invalid_argument("occupancy_tv: samples must be >= 1");
  const Tensor exact = exact_occupancy(mdp, policy, gamma);
  const std::vector<bool> reachable = reachable_states(mdp, policy);
  const Tensor zs = repeat_rows(z, samples);
  std::vector<OccupancyComparison> out;
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    if (!reachable[s]) continue;
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      if (policy[s][a] <= 0.0) continue;
      Tensor noise = rng.normal_tensor(samples, vf.state_dim);
      Tensor states({samples, mdp.state_dim()});
      Tensor actions({samples, mdp.action_dim()});
      for (std::size_t i = 0; i < samples; ++i) {
        std::copy_n(mdp.state_embeddings.row(s).begin(), mdp.state_dim(), states.row(i).begin());
        std::copy_n(mdp.action_embeddings.row(a).begin(), mdp.action_dim(), actions.row(i).begin());
      }
      Tensor futures = euler_sample(vf, noise, states, actions, zs, steps);
      std::vector<double> hist(mdp.n_states, 0.0);
      for (std::size_t i = 0; i < samples; ++i)
        hist[mdp.decode_state(futures.row(i))] += 1.0 / static_cast<double>(samples);
      out.push_back({s, a, total_variation(hist, exact.row(s * mdp.n_actions + a))});
    }
  }
  return out;
}

Tensor intention_class_means(const IntentionEncoder& encoder, const TransitionDataset& data,
                             std::size_t num_intentions) {
  if (!data.has_intentions()) throw std::invalid_argument("intention_class_means: dataset has no intention ids");
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const TransitionBatch batch = data.gather(all);
  const Tensor mu = encode_mean(encoder, batch.next_states, batch.next_actions);
  Tensor means = Tensor::matrix(num_intentions, encoder.latent_dim, 0.0);
  std::vector<double> counts(num_intentions, 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t k = data.intention_ids[i];
    if (k >= num_intentions) throw std::invalid_argument("intention_class_means: id out of range");
    counts[k] += 1.0;
    for (std::size_t c = 0; c < encoder.latent_dim; ++c) means.at(k, c) += mu.at(i, c);
  }
  for (std::size_t k = 0; k < num_intentions; ++k) {
    if (counts[k] == 0.0) continue;
    for (std::size_t c = 0; c < encoder.latent_dim; ++c) means.at(k, c) /= counts[k];
  }
  return means;
}

double sample_expectile(const std::vector<double>& values, double mu) {
  if (values.empty()) throw std::invalid_argument("sample_expectile: no values");
  if (!(mu > 0.0 && mu < 1.0)) throw std::invalid_argument("sample_expectile: mu must be in (0, 1)");
  auto slope = [&](double m) {
    double g = 0.0;
    for (double x : values) g += (x > m ? mu : 1.0 - mu) * (x - m);
    return g;
  };
  double lo = *std::min_element(values.begin(), values.end());
  double hi = *std::max_element(values.begin(), values.end());
  for (int i = 0; i < 200 && hi - lo > 0.0; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (slope(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

namespace {

constexpr double kFdEps = 1e-6;

struct SuiteFixture {
  static constexpr std::size_t kBatch = 4;
  static constexpr std::size_t kStateDim = 2;
  static constexpr std::size_t kActionDim = 2;
  static constexpr std::size_t kLatentDim = 3;
  static constexpr std::size_t kSteps = 3;
  static constexpr double kGamma = 0.9;

  Rng rng;
  std::vector<std::size_t> hidden{8, 8};
  VectorFieldModel vf, target;
  IntentionEncoder encoder;
  RewardPredictor reward;
  Critic critic;
  PolicyModel policy;
  TransitionBatch batch;
  FlowBatch flow;

  explicit SuiteFixture(std::uint64_t seed) : rng(Rng::derive(seed, Stream::Init, 0x9d)) {
    vf = VectorFieldModel::create(kStateDim, kActionDim, kLatentDim, hidden, rng);
    target = VectorFieldModel::create(kStateDim, kActionDim, kLatentDim, hidden, rng);
    encoder = IntentionEncoder::create(kStateDim, kActionDim, kLatentDim, hidden, rng);
    reward = RewardPredictor::create(kStateDim, hidden, rng);
    critic = Critic::create(kStateDim, kActionDim, hidden, rng);
    policy = PolicyModel::create(kStateDim, kActionDim, hidden, rng);
    batch.states = rng.normal_tensor(kBatch, kStateDim);
    batch.actions = rng.normal_tensor(kBatch, kActionDim);
    batch.next_states = rng.normal_tensor(kBatch, kStateDim);
    batch.next_actions = rng.normal_tensor(kBatch, kActionDim);
    batch.rewards = rng.uniform_tensor(kBatch, 1);
    batch.labeled = true;
    flow = FlowBatch::from(batch, rng, rng);
  }
};

GradientCase check(const std::string& name, const LossBuilder& f, ParamSet& params, std::uint64_t seed) {
  return {name, finite_difference_check(f, params, kFdEps, 100, seed)};
}

}  // namespace

std::vector<GradientCase> gradient_suite(std::uint64_t seed) {
  SuiteFixture fx(seed);
  using F = SuiteFixture;
  const Tensor z = fx.rng.normal_tensor(F::kBatch, F::kLatentDim);
  const Tensor latent_noise = fx.rng.normal_tensor(F::kBatch, F::kLatentDim);
  const Tensor policy_noise = fx.rng.normal_tensor(F::kBatch, F::kActionDim);
  const std::size_t n = 3, m = 2;
  const Tensor future_noise = fx.rng.normal_tensor(F::kBatch * n, F::kStateDim);
  NaiveGpiInputs gpi;
  gpi.latents = fx.rng.normal_tensor(F::kBatch * m, F::kLatentDim);
  gpi.future_noise = fx.rng.normal_tensor(F::kBatch * m * n, F::kStateDim);
  gpi.policy_noise = policy_noise;
  Tensor q_targets = fx.rng.normal_tensor(F::kBatch, 1);

  std::vector<GradientCase> out;
  out.push_back(check("cfm", [&](Tape& t, const ParamSet&) {
    return cfm_loss(t, fx.vf, fx.flow.next_states, fx.flow.states, fx.flow.actions, t.constant(z),
                    fx.flow.times, fx.flow.noise);
  }, fx.vf.params, seed));
  out.push_back(check("sarsa_flow", [&](Tape& t, const ParamSet&) {
    return sarsa_flow_loss(t, fx.vf, fx.target, fx.flow, t.constant(z), F::kGamma, F::kSteps).total;
  }, fx.vf.params, seed));
  const TargetPolicy shifted = [](const Tensor& s) {
    Tensor a = s;
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::sin(a[i]);
    return a;
  };
  out.push_back(check("td_flow", [&](Tape& t, const ParamSet&) {
    return td_flow_loss(t, fx.vf, fx.target, fx.flow, t.constant(z), shifted, F::kGamma, F::kSteps).total;
  }, fx.vf.params, seed));
  // The bootstrap target sees z only as a value; pin it so the central
  // differences measure the same semi-gradient.
  Tensor pinned;
  {
    Tape t;
    pinned = elbo_objective(t, fx.vf, fx.target, fx.encoder, fx.flow, latent_noise, F::kGamma,
                            ElboConfig{}, F::kSteps).latents;
  }
  const auto elbo = [&](Tape& t, const ParamSet&) {
    return elbo_objective(t, fx.vf, fx.target, fx.encoder, fx.flow, latent_noise, F::kGamma,
                          ElboConfig{0.05, false, &pinned}, F::kSteps).total;
  };
  out.push_back(check("elbo/vector_field", elbo, fx.vf.params, seed));
  out.push_back(check("elbo/encoder", elbo, fx.encoder.params, seed));
  out.push_back(check("reward", [&](Tape& t, const ParamSet&) {
    return reward_loss(t, fx.reward, fx.batch);
  }, fx.reward.params, seed));
  out.push_back(check("expectile_critic", [&](Tape& t, const ParamSet&) {
    return critic_distillation_loss(t, fx.critic, fx.batch.states, fx.batch.actions, q_targets, 0.9);
  }, fx.critic.params, seed));
  out.push_back(check("actor", [&](Tape& t, const ParamSet&) {
    return actor_loss(t, fx.policy, fx.critic, fx.batch.states, fx.batch.actions, policy_noise, 0.3);
  }, fx.policy.params, seed));
  const auto one_step = [&](bool want_critic) {
    return [&, want_critic](Tape& t, const ParamSet&) {
      Tape other;
      OneStepLosses l = want_critic
          ? one_step_pi_losses(t, other, fx.critic, fx.policy, fx.vf, fx.reward, fx.batch.states,
                               fx.batch.actions, future_noise, policy_noise, n, 0.3, F::kGamma, F::kSteps)
          : one_step_pi_losses(other, t, fx.critic, fx.policy, fx.vf, fx.reward, fx.batch.states,
                               fx.batch.actions, future_noise, policy_noise, n, 0.3, F::kGamma, F::kSteps);
      return want_critic ? l.critic : l.actor;
    };
  };
  out.push_back(check("one_step_pi/critic", one_step(true), fx.critic.params, seed));
  out.push_back(check("one_step_pi/actor", one_step(false), fx.policy.params, seed));
  out.push_back(check("naive_gpi", [&](Tape& t, const ParamSet&) {
    return naive_gpi_objective(t, fx.policy, fx.vf, fx.reward, fx.batch.states, fx.batch.actions,
                               gpi, m, n, 0.3, F::kGamma, F::kSteps);
  }, fx.policy.params, seed));
  return out;
}

OracleReport oracle_check(const ExperimentConfig& config, const Agent* agent) {
  config.validate();
  const Task task = make_task(config.task, config.embedding_seed);
  if (task.kind != TaskKind::Tabular) throw std::invalid_argument("oracle-check needs a tabular task");
  const TabularMdp& mdp = task.mdp;
  const double gamma = config.gamma;
  OracleReport report;

  const auto& policies = task.behavior.policies;
  for (std::size_t k = 0; k < policies.size(); ++k) {
    const Tensor occ = exact_occupancy(mdp, policies[k], gamma);
    report.add("occupancy_residual/intention_" + std::to_string(k),
               occupancy_residual(mdp, policies[k], gamma, occ), kResidualTolerance);
    TabularMdp ones = mdp;
    ones.reward.assign(mdp.n_states, 1.0);
    const Tensor q = exact_q(ones, policies[k], gamma);
    double worst = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) worst = std::max(worst, std::abs(q[i] - 1.0 / (1.0 - gamma)));
    report.add("q_unit_reward_error/intention_" + std::to_string(k), worst, kResidualTolerance);
  }

  const std::vector<double> targets{1.0, 1.5, 2.0, 2.5, 3.0};
  double mean = 0.0;
  for (double t : targets) mean += t / static_cast<double>(targets.size());
  report.add("expectile_gap/mu_0.5_to_mean", std::abs(sample_expectile(targets, 0.5) - mean), 1e-9);
  report.add("expectile_gap/mu_0.99_to_max", (3.0 - sample_expectile(targets, 0.99)) / 3.0, 0.05);

  for (const GradientCase& c : gradient_suite(config.seed))
    report.add("gradient_check/" + c.name, c.result.max_rel_error, kGradientTolerance);

  if (agent) {
    Rng rng = Rng::derive(config.seed, Stream::Eval, 0x0ccu);
    constexpr std::size_t kSamples = 1000;
    if (config.conditioned) {
      const GeneratedData data = generate_data(config, task);
      const Tensor means = intention_class_means(agent->encoder, data.pretrain, policies.size());
      for (std::size_t k = 0; k < policies.size(); ++k) {
        Tensor z = Tensor::matrix(1, config.latent_dim);
        for (std::size_t c = 0; c < config.latent_dim; ++c) z.at(0, c) = means.at(k, c);
        for (const auto& cmp : occupancy_tv(agent->vf, mdp, policies[k], z, gamma, kSamples, config.euler_steps, rng))
          report.add("occupancy_tv/intention_" + std::to_string(k) + "/s" + std::to_string(cmp.state) +
                         "_a" + std::to_string(cmp.action), cmp.tv, kTvTolerance);
      }
    } else if (policies.size() == 1) {
      const Tensor z = Tensor::matrix(1, config.latent_dim, 0.0);
      for (const auto& cmp : occupancy_tv(agent->vf, mdp, policies[0], z, gamma, kSamples, config.euler_steps, rng))
        report.add("occupancy_tv/s" + std::to_string(cmp.state) + "_a" + std::to_string(cmp.action),
                   cmp.tv, kTvTolerance);
    }
  }
  return report;
}

}  // namespace infom
