#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "infom/dataset.hpp"
#include "infom/point_mass.hpp"
#include "infom/tabular.hpp"

namespace infom {

/// Episodic environment seen through state vectors (embeddings for tabular
/// tasks). reward() is r of the current state.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual std::vector<double> reset(Rng& rng) = 0;
  virtual std::vector<double> step(std::span<const double> action, Rng& rng) = 0;
  virtual double reward() const = 0;
};

enum class TaskKind { Tabular, PointMass };

/// How the fine-tuning behavior relates to the pre-training behavior.
enum class FinetuneData { Same, Perturbed };

/// Named desk-scale task:
///   chain3          3-state chain, one stochastic behavior, goal at the right end.
///   two_way_ring    6-state ring, intentions "always counter-clockwise" /
///                   "always clockwise", reward at ring state 3. Episodes start
///                   in one of six entry states where both intentions act alike,
///                   so (s, a) alone does not reveal where the trajectory goes.
///   two_way_line    15-state line with an entry state above each line state;
///                   intentions "always left" / "always right", starting over
///                   the middle five states. Left and right are the same
///                   displacement everywhere the data reaches.
///   fork            start -> safe absorbing state (r = 0.65) or a hub; from the
///                   hub, right reaches the goal (r = 1) and left the pit (r = 0).
///                   Both intentions split 50/50 at the start; at the hub one
///                   always goes right, the other always left. A third action
///                   (embedding +3) never appears in the data and leads to the pit.
///   point_mass      2-D point mass, intentions are two goal corners; fine-tuning
///                   data comes from the rewarded goal's controller only.
struct Task {
  std::string name;
  TaskKind kind = TaskKind::Tabular;
  TabularMdp mdp;
  IntentionedBehavior behavior;
  IntentionedBehavior finetune_behavior;
  PointMassConfig point_mass;
  PointMassController controller;
  std::vector<double> pretrain_weights;
  std::vector<double> finetune_weights;
  std::size_t data_horizon = 20;
  std::size_t eval_horizon = 20;

  std::size_t state_dim() const;
  std::size_t action_dim() const;
  RewardFn reward_fn() const;
  /// Unlabeled pretraining data or labeled fine-tuning data, with hidden
  /// intention ids kept.
  TransitionDataset collect(Split split, std::size_t n_transitions, std::uint64_t seed,
                            FinetuneData mode = FinetuneData::Same) const;
  std::unique_ptr<Environment> make_env() const;
};

Task make_task(const std::string& name, std::uint64_t embedding_seed = 0);
std::vector<std::string> task_names();

/// Tabular behavior with probability `eps` of a uniformly random action.
IntentionedBehavior perturb_behavior(const IntentionedBehavior& behavior, double eps);

}  // namespace infom
