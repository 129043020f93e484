#pragma once

#include <string>
#include <vector>

#include "infom/agent.hpp"
#include "infom/config.hpp"
#include "infom/tasks.hpp"

namespace infom {

struct ReportEntry {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;  // pass means value < threshold
  bool pass = false;
};

struct OracleReport {
  std::vector<ReportEntry> entries;
  void add(std::string name, double value, double threshold);
  bool passed() const;
  std::string to_text() const;
};

/// Decoded future-state histogram of one (s, a) pair against the exact row.
struct OccupancyComparison {
  std::size_t state = 0;
  std::size_t action = 0;
  double tv = 0.0;
};

/// For every (s, a) with s reachable under `policy` and policy[s][a] > 0:
/// draws `samples` futures from the flow at latent `z` ([1, d]), decodes
/// them to the nearest state embedding and takes the TV distance to the
/// exact occupancy row.
std::vector<OccupancyComparison> occupancy_tv(const VectorFieldModel& vf, const TabularMdp& mdp,
                                              const PolicyTable& policy, const Tensor& z,
                                              double gamma, std::size_t samples,
                                              std::size_t steps, Rng& rng);

/// States reachable from the initial distribution under `policy`.
std::vector<bool> reachable_states(const TabularMdp& mdp, const PolicyTable& policy);

/// Posterior-mean latent averaged over the records of each hidden
/// intention; [K, d]. Needs intention ids.
Tensor intention_class_means(const IntentionEncoder& encoder, const TransitionDataset& data,
                             std::size_t num_intentions);

/// Exact minimizer of sum_i L_mu(x_i - m) by bisection on its derivative.
double sample_expectile(const std::vector<double>& values, double mu);

struct GradientCase {
  std::string name;
  GradCheckResult result;
};

/// Central-difference checks of every training loss on small random
/// instances, 100 coordinates each.
std::vector<GradientCase> gradient_suite(std::uint64_t seed = 0);

inline constexpr double kGradientTolerance = 1e-4;
inline constexpr double kResidualTolerance = 1e-10;
inline constexpr double kTvTolerance = 0.15;

/// Oracle report for a tabular config; `agent` adds trained-model entries.
OracleReport oracle_check(const ExperimentConfig& config, const Agent* agent);

}  // namespace infom
