#pragma once

#include <optional>
#include <string>
#include <vector>

#include "infom/agent.hpp"
#include "infom/config.hpp"
#include "infom/tasks.hpp"

namespace infom {

/// One metrics CSV line. Empty optionals are written as empty fields.
struct MetricsRow {
  std::uint64_t step = 0;
  std::optional<double> flow_current;
  std::optional<double> flow_future;
  std::optional<double> kl;
  std::optional<double> reward_mse;
  std::optional<double> critic;
  std::optional<double> actor;
  std::optional<double> eval_return_mean;
  std::optional<double> eval_return_std;
  double wall_ms = 0.0;
};

const char* metrics_header();
std::string metrics_csv(const std::vector<MetricsRow>& rows);
void write_metrics(const std::string& path, const std::vector<MetricsRow>& rows);

struct EvalResult {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::vector<double> returns;
};

/// Rolls out the policy mean for `horizon` states per episode; the return of
/// an episode is the undiscounted sum of r(s_t), t < horizon.
EvalResult evaluate_policy(const PolicyModel& policy, const Task& task, std::size_t episodes,
                           std::size_t horizon, std::uint64_t seed, std::uint64_t stream_step = 0);

/// Mean of the last three evaluation means in `rows` (fewer if fewer exist).
std::optional<double> final_return(const std::vector<MetricsRow>& rows);

/// Loss values of one optimization step; absent parts stay empty.
struct StepMetrics {
  std::optional<double> flow_current;
  std::optional<double> flow_future;
  std::optional<double> kl;
  std::optional<double> reward_mse;
  std::optional<double> critic;
  std::optional<double> actor;
};

/// One pre-training iteration at agent.pretrain_step, which it increments.
StepMetrics pretrain_step(Agent& agent, const ExperimentConfig& config,
                          const TransitionDataset& data);
/// One fine-tuning iteration at agent.finetune_step, which it increments.
StepMetrics finetune_step(Agent& agent, const ExperimentConfig& config,
                          const TransitionDataset& data);

/// Runs `steps` pre-training iterations and appends a row every log
/// interval. A non-finite loss appends a NaN row and rethrows.
void pretrain(Agent& agent, const ExperimentConfig& config, const TransitionDataset& data,
              std::size_t steps, std::vector<MetricsRow>& rows);

/// Fine-tuning loop. Evaluates every eval interval and at step
/// config.finetune_steps. A fresh run (finetune_step == 0) re-initializes
/// the policy unless policy_init = bc.
void finetune(Agent& agent, const ExperimentConfig& config, const Task& task,
              const TransitionDataset& data, std::size_t steps, std::vector<MetricsRow>& rows);

/// Both datasets of a config with hidden intention ids kept.
struct GeneratedData {
  TransitionDataset pretrain;
  TransitionDataset finetune;
};
GeneratedData generate_data(const ExperimentConfig& config, const Task& task);

// File-level commands used by the CLI. `steps` overrides the configured
// number of iterations for this invocation.
void run_gen_data(const ExperimentConfig& config, const std::string& out_dir);
void run_pretrain(const ExperimentConfig& config, const std::string& out_dir,
                  std::optional<std::size_t> steps, const std::string& resume);
void run_finetune(const ExperimentConfig& config, const std::string& out_dir,
                  std::optional<std::size_t> steps, const std::string& resume);
EvalResult run_evaluate(const ExperimentConfig& config, const std::string& checkpoint);

Agent load_agent(const ExperimentConfig& config, const Task& task, const std::string& path);
void save_agent(const Agent& agent, const std::string& path);

}  // namespace infom
