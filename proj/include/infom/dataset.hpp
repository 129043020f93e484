#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "infom/point_mass.hpp"
#include "infom/random.hpp"
#include "infom/tabular.hpp"
#include "infom/tensor.hpp"

namespace infom {

enum class Split : std::uint8_t { Pretrain = 0, Finetune = 1 };

/// Row-aligned slice of a dataset. Rewards are [B, 1].
struct TransitionBatch {
  Tensor states;
  Tensor actions;
  Tensor rewards;
  Tensor next_states;
  Tensor next_actions;
  bool labeled = false;

  std::size_t size() const { return states.rows(); }
};

/// (s, a, r, s', a') records stored column-wise. Records of one trajectory
/// are contiguous and in time order, so (s', a') of record k is (s, a) of
/// record k + 1 within a trajectory.
struct TransitionDataset {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  Split split = Split::Pretrain;
  bool labeled = false;

  std::vector<double> states;
  std::vector<double> actions;
  std::vector<double> rewards;
  std::vector<double> next_states;
  std::vector<double> next_actions;
  std::vector<std::uint8_t> terminals;
  std::vector<std::uint32_t> trajectory_ids;
  /// Hidden intention per record; empty once stripped for training.
  std::vector<std::uint32_t> intention_ids;

  std::size_t size() const { return trajectory_ids.size(); }
  bool has_intentions() const { return !intention_ids.empty(); }

  std::span<const double> state(std::size_t i) const { return {&states[i * state_dim], state_dim}; }
  std::span<const double> action(std::size_t i) const { return {&actions[i * action_dim], action_dim}; }
  std::span<const double> next_state(std::size_t i) const {
    return {&next_states[i * state_dim], state_dim};
  }
  std::span<const double> next_action(std::size_t i) const {
    return {&next_actions[i * action_dim], action_dim};
  }

  void append(std::span<const double> s, std::span<const double> a, double r,
              std::span<const double> s_next, std::span<const double> a_next, bool terminal,
              std::uint32_t trajectory, std::optional<std::uint32_t> intention);

  /// Checks array lengths and trajectory contiguity, then indexes trajectory
  /// ends. Must be called after the last append.
  void finalize();
  /// Index of the last record of the trajectory containing record i.
  std::size_t trajectory_end(std::size_t i) const { return ends_.at(i); }

  TransitionBatch gather(std::span<const std::size_t> indices) const;
  /// Uniform sampling with replacement.
  TransitionBatch sample(std::size_t batch_size, Rng& rng) const;

  TransitionDataset without_intentions() const;

 private:
  std::vector<std::size_t> ends_;
};

/// One intention drawn per trajectory and held fixed. Trajectories have
/// `horizon` states, hence horizon - 1 records; the last one may be cut
/// short to hit `n_transitions`.
TransitionDataset collect_dataset(const TabularMdp& mdp, const IntentionedBehavior& behavior,
                                  std::size_t n_transitions, std::size_t horizon, Split split,
                                  std::uint64_t seed);
TransitionDataset collect_dataset(const PointMassEnv& env, const PointMassController& controller,
                                  std::span<const double> intention_weights,
                                  std::size_t n_transitions, std::size_t horizon, Split split,
                                  std::uint64_t seed);

/// State k steps ahead with P(k) proportional to gamma^k, truncated to the
/// states remaining in the trajectory (inverse-CDF of the truncated law).
std::vector<double> sample_discounted_future(const TransitionDataset& dataset, std::size_t index,
                                             double gamma, Rng& rng);

using RewardFn = std::function<double(std::span<const double> state)>;

/// Fills r = reward(s). Pretraining data keeps its rewards masked (zero).
TransitionDataset label_rewards(const TransitionDataset& dataset, const RewardFn& reward);

/// Consecutive records of a trajectory whose hidden intentions differ.
std::size_t intention_mismatches(const TransitionDataset& dataset);
/// Consecutive records of a trajectory where (s', a') of one is not (s, a)
/// of the next.
std::size_t continuity_mismatches(const TransitionDataset& dataset);

void write_dataset(const std::string& path, const TransitionDataset& dataset);
TransitionDataset read_dataset(const std::string& path);
void write_dataset_csv(const std::string& path, const TransitionDataset& dataset);

}  // namespace infom
