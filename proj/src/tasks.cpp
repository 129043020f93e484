#include "infom/tasks.hpp"

#include <numbers>
#include <stdexcept>

namespace infom {

namespace {

class TabularEnv final : public Environment {
 public:
  explicit TabularEnv(const TabularMdp& mdp) : mdp_(mdp) {}

  std::vector<double> reset(Rng& rng) override {
    state_ = rng.categorical(mdp_.initial);
    return observation();
  }

  std::vector<double> step(std::span<const double> action, Rng& rng) override {
    state_ = mdp_.sample_next(state_, mdp_.decode_action(action), rng);
    return observation();
  }

  double reward() const override { return mdp_.reward[state_]; }

 private:
  std::vector<double> observation() const {
    auto row = mdp_.state_embeddings.row(state_);
    return {row.begin(), row.end()};
  }

  TabularMdp mdp_;
  std::size_t state_ = 0;
};

class PointMassTaskEnv final : public Environment {
 public:
  explicit PointMassTaskEnv(PointMassConfig config) : env_(std::move(config)) {}

  std::vector<double> reset(Rng& rng) override {
    state_ = env_.reset(rng);
    return {state_.begin(), state_.end()};
  }

  std::vector<double> step(std::span<const double> action, Rng& rng) override {
    state_ = env_.step(state_, action, rng);
    return {state_.begin(), state_.end()};
  }

  double reward() const override { return env_.reward(state_); }

 private:
  PointMassEnv env_;
  Vec2 state_{};
};

std::vector<double> one_hot(std::size_t n, std::size_t i) {
  std::vector<double> v(n, 0.0);
  v[i] = 1.0;
  return v;
}

// Line of states with walls; action 0 moves left, action 1 moves right.
TabularMdp chain(std::size_t n, Rng& rng) {
  TabularMdp mdp;
  mdp.n_states = n;
  mdp.n_actions = 2;
  mdp.transitions.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    mdp.transitions[s].push_back(one_hot(n, s == 0 ? 0 : s - 1));
    mdp.transitions[s].push_back(one_hot(n, s + 1 == n ? s : s + 1));
  }
  mdp.reward = one_hot(n, n - 1);
  mdp.initial.assign(n, 1.0 / static_cast<double>(n));
  mdp.state_embeddings = make_embeddings(n, 2, rng);
  mdp.action_embeddings = Tensor::matrix(2, 1, {-1.0, 1.0});
  mdp.gamma = 0.9;
  return mdp;
}

PolicyTable constant_policy(std::size_t n_states, std::vector<double> row) {
  return PolicyTable(n_states, std::move(row));
}

Task chain3(Rng& rng) {
  Task task;
  task.name = "chain3";
  task.mdp = chain(3, rng);
  task.behavior = {{constant_policy(3, {0.3, 0.7})}, {1.0}};
  task.finetune_behavior = task.behavior;
  task.data_horizon = 20;
  task.eval_horizon = 20;
  return task;
}

// Ring states 0..n-1 on the unit circle; entry state n + j sits outside ring
// state j at radius 2 and leads to it under either action. Action 0 steps
// counter-clockwise, action 1 clockwise.
Task two_way_ring() {
  constexpr std::size_t kRing = 6;
  constexpr std::size_t kStates = 2 * kRing;
  Task task;
  task.name = "two_way_ring";
  TabularMdp& mdp = task.mdp;
  mdp.n_states = kStates;
  mdp.n_actions = 2;
  mdp.transitions.assign(kStates, {});
  mdp.state_embeddings = Tensor::matrix(kStates, 2);
  for (std::size_t j = 0; j < kRing; ++j) {
    mdp.transitions[j] = {one_hot(kStates, (j + kRing - 1) % kRing), one_hot(kStates, (j + 1) % kRing)};
    mdp.transitions[kRing + j] = {one_hot(kStates, j), one_hot(kStates, j)};
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(j) / kRing;
    for (std::size_t r : {std::size_t{1}, std::size_t{2}}) {
      mdp.state_embeddings.at((r - 1) * kRing + j, 0) = static_cast<double>(r) * std::cos(angle);
      mdp.state_embeddings.at((r - 1) * kRing + j, 1) = static_cast<double>(r) * std::sin(angle);
    }
  }
  mdp.reward = one_hot(kStates, kRing / 2);
  mdp.initial.assign(kStates, 0.0);
  for (std::size_t j = kRing; j < kStates; ++j) mdp.initial[j] = 1.0 / kRing;
  mdp.action_embeddings = Tensor::matrix(2, 1, {-1.0, 1.0});
  mdp.gamma = 0.9;

  PolicyTable ccw(kStates, {1.0, 0.0});
  PolicyTable cw(kStates, {0.0, 1.0});
  for (std::size_t j = kRing; j < kStates; ++j) ccw[j] = cw[j] = {0.5, 0.5};
  task.behavior = {{ccw, cw}, {0.5, 0.5}};
  task.finetune_behavior = task.behavior;
  task.data_horizon = 6;
  task.eval_horizon = 12;
  return task;
}

// Line states 0..n-1 at x = (i - n/2) / 2; entry state n + j sits above line
// state j and leads to it under either action. Episodes start at the entries
// over the middle five states and are short enough never to reach the ends.
Task two_way_line() {
  constexpr std::size_t kLine = 15;
  constexpr std::size_t kStates = 2 * kLine;
  Task task;
  task.name = "two_way_line";
  TabularMdp& mdp = task.mdp;
  mdp.n_states = kStates;
  mdp.n_actions = 2;
  mdp.transitions.assign(kStates, {});
  mdp.state_embeddings = Tensor::matrix(kStates, 2);
  for (std::size_t j = 0; j < kLine; ++j) {
    mdp.transitions[j] = {one_hot(kStates, j == 0 ? 0 : j - 1), one_hot(kStates, j + 1 == kLine ? j : j + 1)};
    mdp.transitions[kLine + j] = {one_hot(kStates, j), one_hot(kStates, j)};
    const double x = (static_cast<double>(j) - static_cast<double>(kLine / 2)) / 2.0;
    mdp.state_embeddings.at(j, 0) = x;
    mdp.state_embeddings.at(kLine + j, 0) = x;
    mdp.state_embeddings.at(kLine + j, 1) = 1.0;
  }
  mdp.reward = one_hot(kStates, kLine / 2 + 3);
  mdp.initial.assign(kStates, 0.0);
  for (std::size_t j = kLine / 2 - 2; j <= kLine / 2 + 2; ++j) mdp.initial[kLine + j] = 0.2;
  mdp.action_embeddings = Tensor::matrix(2, 1, {-1.0, 1.0});
  mdp.gamma = 0.9;

  PolicyTable left(kStates, {1.0, 0.0});
  PolicyTable right(kStates, {0.0, 1.0});
  for (std::size_t j = kLine; j < kStates; ++j) left[j] = right[j] = {0.5, 0.5};
  task.behavior = {{left, right}, {0.5, 0.5}};
  task.finetune_behavior = task.behavior;
  task.data_horizon = 4;
  task.eval_horizon = 6;
  return task;
}

Task fork(Rng& rng) {
  enum { S, H, X, G, P, kStates };
  Task task;
  task.name = "fork";
  TabularMdp& mdp = task.mdp;
  mdp.n_states = kStates;
  mdp.n_actions = 3;
  mdp.transitions.assign(kStates, {});
  mdp.transitions[S] = {one_hot(kStates, X), one_hot(kStates, H), one_hot(kStates, P)};
  mdp.transitions[H] = {one_hot(kStates, P), one_hot(kStates, G), one_hot(kStates, P)};
  for (int s : {X, G, P}) mdp.transitions[s].assign(3, one_hot(kStates, s));
  mdp.reward = {0.0, 0.0, 0.65, 1.0, 0.0};
  mdp.initial = one_hot(kStates, S);
  mdp.state_embeddings = make_embeddings(kStates, 2, rng);
  mdp.action_embeddings = Tensor::matrix(3, 1, {-1.0, 1.0, 3.0});
  mdp.gamma = 0.9;

  PolicyTable right(kStates, {0.0, 1.0, 0.0});
  PolicyTable left(kStates, {1.0, 0.0, 0.0});
  right[S] = left[S] = {0.5, 0.5, 0.0};
  task.behavior = {{left, right}, {0.5, 0.5}};
  task.finetune_behavior = task.behavior;
  task.data_horizon = 6;
  task.eval_horizon = 10;
  return task;
}

Task point_mass() {
  Task task;
  task.name = "point_mass";
  task.kind = TaskKind::PointMass;
  task.pretrain_weights = {0.5, 0.5};
  task.finetune_weights = {1.0, 0.0};
  task.data_horizon = task.point_mass.horizon;
  task.eval_horizon = task.point_mass.horizon;
  return task;
}

}  // namespace

std::size_t Task::state_dim() const {
  return kind == TaskKind::Tabular ? mdp.state_dim() : 2;
}

std::size_t Task::action_dim() const {
  return kind == TaskKind::Tabular ? mdp.action_dim() : 2;
}

RewardFn Task::reward_fn() const {
  if (kind == TaskKind::Tabular) {
    return [m = mdp](std::span<const double> s) { return m.reward[m.decode_state(s)]; };
  }
  return [env = PointMassEnv(point_mass)](std::span<const double> s) {
    return env.reward({s[0], s[1]});
  };
}

TransitionDataset Task::collect(Split split, std::size_t n_transitions, std::uint64_t seed,
                                FinetuneData mode) const {
  TransitionDataset ds;
  if (kind == TaskKind::Tabular) {
    IntentionedBehavior b = split == Split::Pretrain ? behavior : finetune_behavior;
    if (split == Split::Finetune && mode == FinetuneData::Perturbed) b = perturb_behavior(b, 0.2);
    ds = collect_dataset(mdp, b, n_transitions, data_horizon, split, seed);
  } else {
    PointMassController c = controller;
    if (split == Split::Finetune && mode == FinetuneData::Perturbed) c.action_noise *= 2.0;
    const auto& w = split == Split::Pretrain ? pretrain_weights : finetune_weights;
    ds = collect_dataset(PointMassEnv(point_mass), c, w, n_transitions, data_horizon, split, seed);
  }
  return label_rewards(ds, reward_fn());
}

std::unique_ptr<Environment> Task::make_env() const {
  if (kind == TaskKind::Tabular) return std::make_unique<TabularEnv>(mdp);
  return std::make_unique<PointMassTaskEnv>(point_mass);
}

Task make_task(const std::string& name, std::uint64_t embedding_seed) {
  Rng rng = Rng::derive(embedding_seed, Stream::Environment, 0x7a5c);
  Task task;
  if (name == "chain3") {
    task = chain3(rng);
  } else if (name == "two_way_ring") {
    task = two_way_ring();
  } else if (name == "two_way_line") {
    task = two_way_line();
  } else if (name == "fork") {
    task = fork(rng);
  } else if (name == "point_mass") {
    task = point_mass();
  } else {
    throw std::invalid_argument("unknown task '" + name + "'");
  }
  if (task.kind == TaskKind::Tabular) {
    task.mdp.validate();
    task.behavior.validate(task.mdp);
    task.finetune_behavior.validate(task.mdp);
  } else {
    task.point_mass.validate();
  }
  return task;
}

std::vector<std::string> task_names() { return {"chain3", "two_way_ring", "two_way_line", "fork", "point_mass"}; }

IntentionedBehavior perturb_behavior(const IntentionedBehavior& behavior, double eps) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw std::invalid_argument("perturb_behavior: eps must be in [0, 1]");
  IntentionedBehavior out = behavior;
  const std::size_t n_states = behavior.policies.at(0).size();
  for (std::size_t s = 0; s < n_states; ++s) {
    // Only actions some intention takes at s; never introduce unseen actions.
    const std::size_t n_actions = behavior.policies[0][s].size();
    std::vector<bool> support(n_actions, false);
    for (const auto& p : behavior.policies)
      for (std::size_t a = 0; a < n_actions; ++a) support[a] = support[a] || p[s][a] > 0.0;
    double count = 0.0;
    for (bool b : support) count += b;
    for (auto& p : out.policies)
      for (std::size_t a = 0; a < n_actions; ++a) p[s][a] = (1.0 - eps) * p[s][a] + (support[a] ? eps / count : 0.0);
  }
  return out;
}

}  // namespace infom
