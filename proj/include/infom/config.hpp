#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace infom {

enum class FinetuneMethod { ImplicitGpi, NaiveGpi, OneStepPi };

/// Everything a run needs. The file format is `key = value` lines grouped
/// under `[section]` headers; `#` starts a comment. Unknown keys are errors.
struct ExperimentConfig {
  // [run]
  std::uint64_t seed = 0;
  bool wall_clock = false;  // record real wall_ms in metrics (breaks byte-identical CSVs)

  // [env]
  std::string task = "chain3";
  std::uint64_t embedding_seed = 0;
  std::string finetune_data = "same";  // same | perturbed

  // [data]
  std::size_t pretrain_transitions = 20000;
  std::size_t finetune_transitions = 10000;
  std::string pretrain_path;  // empty: <out>/pretrain.infd
  std::string finetune_path;  // empty: <out>/finetune.infd

  // [model]
  std::vector<std::size_t> hidden{64, 64};
  std::size_t latent_dim = 8;
  bool conditioned = true;  // false zeroes z and trains no encoder

  // [train]
  double gamma = 0.99;
  double lr = 3e-4;
  double tau = 0.005;
  std::size_t batch_size = 256;
  std::size_t euler_steps = 10;
  double kl_coef = 0.05;

  // [pretrain]
  std::size_t pretrain_steps = 20000;
  bool pretrain_bc = false;

  // [finetune]
  std::size_t finetune_steps = 10000;
  FinetuneMethod method = FinetuneMethod::ImplicitGpi;
  std::size_t num_future_samples = 16;
  double expectile = 0.9;
  double alpha = 0.3;
  std::size_t gpi_latents = 32;
  std::size_t actor_every = 4;
  std::string policy_init = "random";  // random | bc
  bool update_occupancy = true;

  // [eval]
  std::size_t eval_episodes = 10;
  std::size_t eval_interval = 1000;
  std::size_t eval_horizon = 0;  // 0: task default

  // [log]
  std::size_t log_interval = 100;

  void validate() const;
  /// Hash of the fields that fix parameter shapes and the environment; a
  /// checkpoint can only be resumed under a config with the same hash.
  std::uint64_t model_hash() const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
/// Canonical text form; parse_config(to_text(c)) reproduces c.
std::string to_text(const ExperimentConfig& config);

const char* method_name(FinetuneMethod method);

}  // namespace infom
