#pragma once

#include <cstdint>

#include "infom/config.hpp"
#include "infom/finetune.hpp"
#include "infom/flow.hpp"
#include "infom/intention.hpp"
#include "infom/optim.hpp"

namespace infom {

/// All networks of a run, their optimizer states and the step counters.
struct Agent {
  IntentionEncoder encoder;
  VectorFieldModel vf;
  VectorFieldModel vf_target;
  RewardPredictor reward;
  Critic critic;
  PolicyModel policy;

  AdamState encoder_opt;
  AdamState vf_opt;
  AdamState reward_opt;
  AdamState critic_opt;
  AdamState policy_opt;

  std::uint64_t pretrain_step = 0;
  std::uint64_t finetune_step = 0;
  std::uint64_t config_hash = 0;

  /// Fresh initialization from the config's seed; the target field starts as
  /// a copy of the online field.
  static Agent create(const ExperimentConfig& config, std::size_t state_dim, std::size_t action_dim);

  /// Re-initializes the policy and its optimizer (fine-tuning from scratch).
  void reset_policy(const ExperimentConfig& config);

  ParamSet to_tensors() const;
  /// Rebuilds an agent from a checkpoint. Throws if the config hash differs
  /// or any tensor is missing or mis-shaped.
  static Agent from_tensors(const ExperimentConfig& config, std::size_t state_dim,
                            std::size_t action_dim, const ParamSet& tensors);
};

}  // namespace infom
