#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "infom/checkpoint.hpp"
#include "infom/pipeline.hpp"

using namespace infom;

namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.task = "chain3";
  c.seed = 3;
  c.hidden = {16, 16};
  c.latent_dim = 2;
  c.batch_size = 16;
  c.euler_steps = 4;
  c.pretrain_transitions = 300;
  c.finetune_transitions = 200;
  c.pretrain_steps = 40;
  c.finetune_steps = 20;
  c.num_future_samples = 4;
  c.gpi_latents = 4;
  c.eval_episodes = 3;
  c.eval_interval = 10;
  c.log_interval = 10;
  c.pretrain_bc = true;
  return c;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / ("infom_test_" + name)) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string operator/(const char* name) const { return (path / name).string(); }
};

// Expected undiscounted return of a deterministic table policy over `horizon`
// states, by propagating the state distribution.
double exact_finite_return(const TabularMdp& mdp, const std::vector<std::size_t>& action,
                           std::size_t horizon) {
  std::vector<double> dist = mdp.initial;
  double total = 0.0;
  for (std::size_t t = 0; t < horizon; ++t) {
    std::vector<double> next(mdp.n_states, 0.0);
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
      total += dist[s] * mdp.reward[s];
      for (std::size_t f = 0; f < mdp.n_states; ++f) next[f] += dist[s] * mdp.transitions[s][action[s]][f];
    }
    dist = next;
  }
  return total;
}

}  // namespace

TEST_CASE("metrics CSV header and empty fields") {
  CHECK(std::string(metrics_header()) ==
        "step,flow_current,flow_future,kl,reward_mse,critic,actor,eval_return_mean,eval_return_std,wall_ms");
  MetricsRow row;
  row.step = 5;
  row.kl = 0.25;
  const std::string csv = metrics_csv({row});
  CHECK(csv == std::string(metrics_header()) + "\n5,,,0.25,,,,,,0\n");
  CHECK(metrics_csv({}) == std::string(metrics_header()) + "\n");
}

TEST_CASE("final return averages the last three evaluations") {
  std::vector<MetricsRow> rows(5);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].step = i;
  CHECK_FALSE(final_return(rows).has_value());
  rows[0].eval_return_mean = 100.0;
  rows[1].eval_return_mean = 1.0;
  rows[3].eval_return_mean = 2.0;
  rows[4].eval_return_mean = 6.0;
  CHECK(*final_return(rows) == doctest::Approx(3.0));
  rows = {rows[0]};
  CHECK(*final_return(rows) == 100.0);
}

TEST_CASE("zero reward gives zero return exactly") {
  Task task = make_task("chain3");
  task.mdp.reward.assign(task.mdp.n_states, 0.0);
  Rng rng(1);
  const PolicyModel policy = PolicyModel::create(task.state_dim(), task.action_dim(), {8}, rng);
  const EvalResult r = evaluate_policy(policy, task, 5, 20, 0);
  CHECK(r.mean == 0.0);
  CHECK(r.std == 0.0);
  for (double x : r.returns) CHECK(x == 0.0);
}

TEST_CASE("Monte Carlo return agrees with exact evaluation") {
  Rng rng(21);
  Task task = make_task("chain3");
  task.mdp = random_mdp(5, 2, 0.9, rng);
  const PolicyModel policy = PolicyModel::create(task.state_dim(), task.action_dim(), {8}, rng);
  std::vector<std::size_t> action(task.mdp.n_states);
  const Tensor means = policy.mean(task.mdp.state_embeddings);
  for (std::size_t s = 0; s < task.mdp.n_states; ++s) action[s] = task.mdp.decode_action(means.row(s));
  const std::size_t horizon = 8, episodes = 4000;
  const EvalResult r = evaluate_policy(policy, task, episodes, horizon, 5);
  const double exact = exact_finite_return(task.mdp, action, horizon);
  const double se = r.std / std::sqrt(static_cast<double>(episodes));
  CHECK(se > 0.0);
  CHECK(std::abs(r.mean - exact) < 3.0 * se);
}

TEST_CASE("evaluation is reproducible per seed and stream") {
  const Task task = make_task("two_way_ring");
  Rng rng(2);
  const PolicyModel policy = PolicyModel::create(task.state_dim(), task.action_dim(), {8}, rng);
  const EvalResult a = evaluate_policy(policy, task, 20, 12, 7, 3);
  CHECK(evaluate_policy(policy, task, 20, 12, 7, 3).returns == a.returns);
  CHECK(evaluate_policy(policy, task, 20, 12, 7, 4).returns != a.returns);
  CHECK_THROWS(evaluate_policy(policy, task, 0, 12, 7));
  CHECK_THROWS(evaluate_policy(policy, make_task("point_mass"), 1, 12, 7));
}

TEST_CASE("zero pre-training steps leave the initialization") {
  const ExperimentConfig c = tiny_config();
  const Task task = make_task(c.task);
  const GeneratedData data = generate_data(c, task);
  Agent agent = Agent::create(c, task.state_dim(), task.action_dim());
  const ParamSet init = agent.to_tensors();
  std::vector<MetricsRow> rows;
  pretrain(agent, c, data.pretrain, 0, rows);
  CHECK(rows.empty());
  CHECK(agent.to_tensors() == init);
}

TEST_CASE("flow loss on a single self-looping state halves") {
  ExperimentConfig c = tiny_config();
  c.conditioned = false;
  c.pretrain_bc = false;
  c.gamma = 0.9;
  c.lr = 1e-3;
  c.batch_size = 32;
  c.log_interval = 1;
  TransitionDataset ds;
  ds.state_dim = 2;
  ds.action_dim = 1;
  const std::vector<double> s{0.8, -0.4}, a{0.0};
  for (std::uint32_t i = 0; i < 64; ++i) ds.append(s, a, 0.0, s, a, true, i, 0);
  ds.finalize();
  Agent agent = Agent::create(c, 2, 1);
  std::vector<MetricsRow> rows;
  pretrain(agent, c, ds, 2000, rows);
  REQUIRE(rows.size() == 2000);
  auto window_mean = [&](std::size_t from) {
    double total = 0.0;
    for (std::size_t i = from; i < from + 100; ++i)
      total += (1.0 - c.gamma) * *rows[i].flow_current + c.gamma * *rows[i].flow_future;
    return total / 100.0;
  };
  const double first = window_mean(0), last = window_mean(1900);
  CHECK(last <= 0.5 * first);
}

TEST_CASE("runs are deterministic and resume is bit-exact") {
  const ExperimentConfig c = tiny_config();
  TempDir a("det_a"), b("det_b"), r("det_resume");
  for (const TempDir* d : {&a, &b, &r}) run_gen_data(c, d->path.string());
  CHECK(slurp(a / "pretrain.infd") == slurp(b / "pretrain.infd"));

  run_pretrain(c, a.path.string(), std::nullopt, "");
  run_pretrain(c, b.path.string(), std::nullopt, "");
  CHECK(slurp(a / "pretrain.ckpt") == slurp(b / "pretrain.ckpt"));
  CHECK(slurp(a / "pretrain_metrics.csv") == slurp(b / "pretrain_metrics.csv"));

  run_pretrain(c, r.path.string(), 15, "");
  run_pretrain(c, r.path.string(), std::nullopt, r / "pretrain.ckpt");
  CHECK(slurp(r / "pretrain.ckpt") == slurp(a / "pretrain.ckpt"));

  run_finetune(c, a.path.string(), std::nullopt, a / "pretrain.ckpt");
  run_finetune(c, b.path.string(), std::nullopt, b / "pretrain.ckpt");
  CHECK(slurp(a / "finetune.ckpt") == slurp(b / "finetune.ckpt"));
  CHECK(slurp(a / "finetune_metrics.csv") == slurp(b / "finetune_metrics.csv"));

  run_finetune(c, r.path.string(), 7, r / "pretrain.ckpt");
  const std::string head = slurp(r / "finetune_metrics.csv");
  run_finetune(c, r.path.string(), std::nullopt, r / "finetune.ckpt");
  CHECK(slurp(r / "finetune.ckpt") == slurp(a / "finetune.ckpt"));
  // The two resumed segments together log the same rows as one run.
  const std::string tail = slurp(r / "finetune_metrics.csv");
  const std::string header = std::string(metrics_header()) + "\n";
  CHECK(head + tail.substr(header.size()) == slurp(a / "finetune_metrics.csv"));

  const ParamSet ckpt = read_checkpoint(a / "finetune.ckpt");
  CHECK(serialize_checkpoint(ckpt) == slurp(a / "finetune.ckpt"));
  const EvalResult e1 = run_evaluate(c, a / "finetune.ckpt");
  CHECK(run_evaluate(c, a / "finetune.ckpt").returns == e1.returns);
}

TEST_CASE("fine-tuning rejects missing labels and foreign checkpoints") {
  ExperimentConfig c = tiny_config();
  const Task task = make_task(c.task);
  const GeneratedData data = generate_data(c, task);
  Agent agent = Agent::create(c, task.state_dim(), task.action_dim());
  std::vector<MetricsRow> rows;
  CHECK_THROWS(finetune(agent, c, task, data.pretrain, 1, rows));

  TempDir d("foreign");
  run_gen_data(c, d.path.string());
  run_pretrain(c, d.path.string(), 2, "");
  ExperimentConfig other = c;
  other.latent_dim = 5;
  CHECK_THROWS(run_finetune(other, d.path.string(), 1, d / "pretrain.ckpt"));
  CHECK_THROWS(run_finetune(c, d.path.string(), 1, ""));
}

TEST_CASE("pre-training rejects a dataset of the wrong shape") {
  const ExperimentConfig c = tiny_config();
  const Task chain = make_task("chain3");
  Agent agent = Agent::create(c, chain.state_dim(), chain.action_dim());
  std::vector<MetricsRow> rows;
  TransitionDataset wide;
  wide.state_dim = 3;
  wide.action_dim = 1;
  const std::vector<double> s{0, 0, 0}, a{0};
  wide.append(s, a, 0.0, s, a, true, 0, 0);
  wide.finalize();
  CHECK_THROWS(pretrain(agent, c, wide, 1, rows));
}
