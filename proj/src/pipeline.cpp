#include "infom/pipeline.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "infom/checkpoint.hpp"

namespace infom {

namespace {

constexpr std::uint64_t kPretrainPhase = 1;
constexpr std::uint64_t kFinetunePhase = 2;
constexpr std::uint64_t kPretrainData = 3;
constexpr std::uint64_t kFinetuneData = 4;

std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("cannot format number");
  return {buf, end};
}

void put(std::string& out, const std::optional<double>& v) {
  out += ',';
  if (v) out += format_number(*v);
}

Tensor zero_latents(std::size_t rows, std::size_t dim) { return Tensor::matrix(rows, dim, 0.0); }

/// Flow (and, when conditioned, encoder) update followed by the Polyak step.
void occupancy_update(Agent& agent, const ExperimentConfig& config, const TransitionBatch& batch,
                      std::uint64_t phase, std::uint64_t k, StepMetrics& m) {
  Rng time_rng = Rng::derive(phase, Stream::FlowTime, k);
  Rng noise_rng = Rng::derive(phase, Stream::FlowNoise, k);
  const FlowBatch flow_batch = FlowBatch::from(batch, time_rng, noise_rng);
  const AdamConfig adam{config.lr};
  Tape tape;
  if (config.conditioned) {
    Rng latent_rng = Rng::derive(phase, Stream::Latent, k);
    const Tensor latent_noise = latent_rng.normal_tensor(batch.size(), config.latent_dim);
    ElboTerms elbo = elbo_objective(tape, agent.vf, agent.vf_target, agent.encoder, flow_batch,
                                    latent_noise, config.gamma, ElboConfig{config.kl_coef, false},
                                    config.euler_steps);
    auto grads = backward(elbo.total, {&agent.vf.params, &agent.encoder.params});
    adam_step(agent.vf.params, grads[0], agent.vf_opt, adam);
    adam_step(agent.encoder.params, grads[1], agent.encoder_opt, adam);
    m.flow_current = elbo.flow_current;
    m.flow_future = elbo.flow_future;
    m.kl = elbo.kl;
  } else {
    Var z = tape.constant(zero_latents(batch.size(), config.latent_dim));
    FlowLoss flow = sarsa_flow_loss(tape, agent.vf, agent.vf_target, flow_batch, z, config.gamma,
                                    config.euler_steps);
    adam_step(agent.vf.params, backward(flow.total, agent.vf.params), agent.vf_opt, adam);
    m.flow_current = flow.current;
    m.flow_future = flow.future;
  }
  polyak_update(agent.vf_target.params, agent.vf.params, config.tau);
}

void check_dims(const Agent& agent, const TransitionDataset& data) {
  if (data.state_dim != agent.vf.state_dim || data.action_dim != agent.vf.action_dim)
    throw std::invalid_argument("dataset dimensions (" + std::to_string(data.state_dim) + ", " +
                                std::to_string(data.action_dim) + ") do not match the model");
  if (data.size() == 0) throw std::invalid_argument("dataset is empty");
}

MetricsRow to_row(std::uint64_t step, const StepMetrics& m) {
  MetricsRow row;
  row.step = step;
  row.flow_current = m.flow_current;
  row.flow_future = m.flow_future;
  row.kl = m.kl;
  row.reward_mse = m.reward_mse;
  row.critic = m.critic;
  row.actor = m.actor;
  return row;
}

MetricsRow nan_row(std::uint64_t step) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  MetricsRow row;
  row.step = step;
  row.flow_current = row.flow_future = row.kl = row.reward_mse = row.critic = row.actor = nan;
  return row;
}

class Stopwatch {
 public:
  explicit Stopwatch(bool enabled) : enabled_(enabled), start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    if (!enabled_) return 0.0;
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  bool enabled_;
  std::chrono::steady_clock::time_point start_;
};

std::size_t eval_horizon(const ExperimentConfig& config, const Task& task) {
  return config.eval_horizon ? config.eval_horizon : task.eval_horizon;
}

std::string path_or(const std::string& configured, const std::string& out_dir, const char* name) {
  return configured.empty() ? (std::filesystem::path(out_dir) / name).string() : configured;
}

std::size_t remaining(std::optional<std::size_t> override_steps, std::size_t total, std::uint64_t done) {
  if (override_steps) return *override_steps;
  return total > done ? total - done : 0;
}

}  // namespace

const char* metrics_header() {
  return "step,flow_current,flow_future,kl,reward_mse,critic,actor,eval_return_mean,eval_return_std,wall_ms";
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = metrics_header();
  out += '\n';
  for (const MetricsRow& r : rows) {
    out += std::to_string(r.step);
    put(out, r.flow_current);
    put(out, r.flow_future);
    put(out, r.kl);
    put(out, r.reward_mse);
    put(out, r.critic);
    put(out, r.actor);
    put(out, r.eval_return_mean);
    put(out, r.eval_return_std);
    put(out, r.wall_ms);
    out += '\n';
  }
  return out;
}

void write_metrics(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << metrics_csv(rows);
}

EvalResult evaluate_policy(const PolicyModel& policy, const Task& task, std::size_t episodes,
                           std::size_t horizon, std::uint64_t seed, std::uint64_t stream_step) {
  if (episodes == 0) throw std::invalid_argument("evaluate: episodes must be >= 1");
  if (policy.config.input_dim != task.state_dim() || policy.action_dim() != task.action_dim())
    throw std::invalid_argument("evaluate: policy dimensions do not match the task");
  Rng rng = Rng::derive(seed, Stream::Eval, stream_step);
  auto env = task.make_env();
  EvalResult result;
  for (std::size_t e = 0; e < episodes; ++e) {
    std::vector<double> state = env->reset(rng);
    double total = 0.0;
    for (std::size_t t = 0; t < horizon; ++t) {
      total += env->reward();
      if (t + 1 == horizon) break;
      Tensor s({1, state.size()}, state);
      Tensor a = policy.mean(s);
      state = env->step(a.row(0), rng);
    }
    result.returns.push_back(total);
  }
  double sum = 0.0;
  for (double r : result.returns) sum += r;
  result.mean = sum / static_cast<double>(episodes);
  double sq = 0.0;
  for (double r : result.returns) sq += (r - result.mean) * (r - result.mean);
  result.std = std::sqrt(sq / static_cast<double>(episodes));
  return result;
}

std::optional<double> final_return(const std::vector<MetricsRow>& rows) {
  std::vector<double> evals;
  for (const MetricsRow& r : rows)
    if (r.eval_return_mean) evals.push_back(*r.eval_return_mean);
  if (evals.empty()) return std::nullopt;
  const std::size_t n = evals.size() < 3 ? evals.size() : 3;
  double sum = 0.0;
  for (std::size_t i = evals.size() - n; i < evals.size(); ++i) sum += evals[i];
  return sum / static_cast<double>(n);
}

StepMetrics pretrain_step(Agent& agent, const ExperimentConfig& config,
                          const TransitionDataset& data) {
  const std::uint64_t phase = mix_seed(config.seed, kPretrainPhase);
  const std::uint64_t k = agent.pretrain_step;
  Rng data_rng = Rng::derive(phase, Stream::Data, k);
  const TransitionBatch batch = data.sample(config.batch_size, data_rng);

  StepMetrics m;
  occupancy_update(agent, config, batch, phase, k, m);
  if (config.pretrain_bc) {
    Tape tape;
    GaussianParams dist = agent.policy.distribution(tape, batch.states);
    Var loss = -mean(gaussian_log_prob(dist, tape.constant(batch.actions)));
    m.actor = loss.value().item();
    adam_step(agent.policy.params, backward(loss, agent.policy.params), agent.policy_opt,
              AdamConfig{config.lr});
  }
  ++agent.pretrain_step;
  return m;
}

StepMetrics finetune_step(Agent& agent, const ExperimentConfig& config,
                          const TransitionDataset& data) {
  const std::uint64_t phase = mix_seed(config.seed, kFinetunePhase);
  const std::uint64_t k = agent.finetune_step;
  const AdamConfig adam{config.lr};
  Rng data_rng = Rng::derive(phase, Stream::Data, k);
  const TransitionBatch batch = data.sample(config.batch_size, data_rng);
  const std::size_t b = batch.size();
  const bool actor_due = k % config.actor_every == 0;

  StepMetrics m;
  if (config.update_occupancy) occupancy_update(agent, config, batch, phase, k, m);
  {
    Tape tape;
    Var loss = reward_loss(tape, agent.reward, batch);
    m.reward_mse = loss.value().item();
    adam_step(agent.reward.params, backward(loss, agent.reward.params), agent.reward_opt, adam);
  }

  Rng future_rng = Rng::derive(phase, Stream::FutureNoise, k);
  Rng policy_rng = Rng::derive(phase, Stream::Policy, k);
  Rng prior_rng = Rng::derive(phase, Stream::PriorLatent, k);
  const std::size_t n = config.num_future_samples;

  switch (config.method) {
    case FinetuneMethod::ImplicitGpi: {
      const Tensor z = config.conditioned ? prior_sample(b, config.latent_dim, prior_rng)
                                          : zero_latents(b, config.latent_dim);
      const Tensor q = estimate_q_z(agent.vf, agent.reward, batch.states, batch.actions, z, n,
                                    config.gamma, config.euler_steps, future_rng);
      {
        Tape tape;
        Var loss = critic_distillation_loss(tape, agent.critic, batch.states, batch.actions, q,
                                            config.expectile);
        m.critic = loss.value().item();
        adam_step(agent.critic.params, backward(loss, agent.critic.params), agent.critic_opt, adam);
      }
      if (actor_due) {
        const Tensor noise = policy_rng.normal_tensor(b, agent.policy.action_dim());
        Tape tape;
        Var loss = actor_loss(tape, agent.policy, agent.critic, batch.states, batch.actions, noise,
                              config.alpha);
        m.actor = loss.value().item();
        adam_step(agent.policy.params, backward(loss, agent.policy.params), agent.policy_opt, adam);
      }
      break;
    }
    case FinetuneMethod::NaiveGpi: {
      if (!actor_due) break;
      const std::size_t m_latents = config.gpi_latents;
      NaiveGpiInputs inputs;
      inputs.latents = config.conditioned ? prior_sample(b * m_latents, config.latent_dim, prior_rng)
                                          : zero_latents(b * m_latents, config.latent_dim);
      inputs.future_noise = future_rng.normal_tensor(b * m_latents * n, agent.vf.state_dim);
      inputs.policy_noise = policy_rng.normal_tensor(b, agent.policy.action_dim());
      Tape tape;
      Var loss = naive_gpi_objective(tape, agent.policy, agent.vf, agent.reward, batch.states,
                                     batch.actions, inputs, m_latents, n, config.alpha,
                                     config.gamma, config.euler_steps);
      m.actor = loss.value().item();
      adam_step(agent.policy.params, backward(loss, agent.policy.params), agent.policy_opt, adam);
      break;
    }
    case FinetuneMethod::OneStepPi: {
      const Tensor future_noise = future_rng.normal_tensor(b * n, agent.vf.state_dim);
      const Tensor policy_noise = policy_rng.normal_tensor(b, agent.policy.action_dim());
      Tape critic_tape, actor_tape;
      OneStepLosses losses = one_step_pi_losses(critic_tape, actor_tape, agent.critic, agent.policy,
                                                agent.vf, agent.reward, batch.states,
                                                batch.actions, future_noise, policy_noise, n,
                                                config.alpha, config.gamma, config.euler_steps);
      m.critic = losses.critic.value().item();
      adam_step(agent.critic.params, backward(losses.critic, agent.critic.params), agent.critic_opt,
                adam);
      if (actor_due) {
        m.actor = losses.actor.value().item();
        adam_step(agent.policy.params, backward(losses.actor, agent.policy.params),
                  agent.policy_opt, adam);
      }
      break;
    }
  }
  ++agent.finetune_step;
  return m;
}

void pretrain(Agent& agent, const ExperimentConfig& config, const TransitionDataset& data,
              std::size_t steps, std::vector<MetricsRow>& rows) {
  config.validate();
  check_dims(agent, data);
  const Stopwatch clock(config.wall_clock);
  for (std::size_t i = 0; i < steps; ++i) {
    StepMetrics m;
    try {
      m = pretrain_step(agent, config, data);
    } catch (const NonFiniteError&) {
      rows.push_back(nan_row(agent.pretrain_step + 1));
      throw;
    }
    if (agent.pretrain_step % config.log_interval == 0) {
      rows.push_back(to_row(agent.pretrain_step, m));
      rows.back().wall_ms = clock.ms();
    }
  }
}

void finetune(Agent& agent, const ExperimentConfig& config, const Task& task,
              const TransitionDataset& data, std::size_t steps, std::vector<MetricsRow>& rows) {
  config.validate();
  check_dims(agent, data);
  if (!data.labeled) throw std::invalid_argument("finetune: dataset has no reward labels");
  if (agent.finetune_step == 0 && config.policy_init == "random") agent.reset_policy(config);
  const Stopwatch clock(config.wall_clock);
  const std::size_t horizon = eval_horizon(config, task);
  for (std::size_t i = 0; i < steps; ++i) {
    StepMetrics m;
    try {
      m = finetune_step(agent, config, data);
    } catch (const NonFiniteError&) {
      rows.push_back(nan_row(agent.finetune_step + 1));
      throw;
    }
    const std::uint64_t step = agent.finetune_step;
    const bool log = step % config.log_interval == 0;
    const bool eval = step % config.eval_interval == 0 || step == config.finetune_steps;
    if (!log && !eval) continue;
    MetricsRow row = to_row(step, m);
    if (eval) {
      const EvalResult r = evaluate_policy(agent.policy, task, config.eval_episodes, horizon,
                                           config.seed, step);
      row.eval_return_mean = r.mean;
      row.eval_return_std = r.std;
    }
    row.wall_ms = clock.ms();
    rows.push_back(row);
  }
}

GeneratedData generate_data(const ExperimentConfig& config, const Task& task) {
  config.validate();
  const FinetuneData mode =
      config.finetune_data == "perturbed" ? FinetuneData::Perturbed : FinetuneData::Same;
  GeneratedData out;
  out.pretrain = task.collect(Split::Pretrain, config.pretrain_transitions,
                              mix_seed(config.seed, kPretrainData));
  out.finetune = task.collect(Split::Finetune, config.finetune_transitions,
                              mix_seed(config.seed, kFinetuneData), mode);
  return out;
}

Agent load_agent(const ExperimentConfig& config, const Task& task, const std::string& path) {
  return Agent::from_tensors(config, task.state_dim(), task.action_dim(), read_checkpoint(path));
}

void save_agent(const Agent& agent, const std::string& path) {
  write_checkpoint(path, agent.to_tensors());
}

void run_gen_data(const ExperimentConfig& config, const std::string& out_dir) {
  const Task task = make_task(config.task, config.embedding_seed);
  GeneratedData data = generate_data(config, task);
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  write_dataset(path_or(config.pretrain_path, out_dir, "pretrain.infd"), data.pretrain.without_intentions());
  write_dataset(path_or(config.finetune_path, out_dir, "finetune.infd"), data.finetune.without_intentions());
  write_dataset_csv((dir / "pretrain_debug.csv").string(), data.pretrain);
  write_dataset_csv((dir / "finetune_debug.csv").string(), data.finetune);
}

void run_pretrain(const ExperimentConfig& config, const std::string& out_dir,
                  std::optional<std::size_t> steps, const std::string& resume) {
  const Task task = make_task(config.task, config.embedding_seed);
  const TransitionDataset data = read_dataset(path_or(config.pretrain_path, out_dir, "pretrain.infd"));
  Agent agent = resume.empty() ? Agent::create(config, task.state_dim(), task.action_dim())
                               : load_agent(config, task, resume);
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  std::vector<MetricsRow> rows;
  try {
    pretrain(agent, config, data, remaining(steps, config.pretrain_steps, agent.pretrain_step), rows);
  } catch (...) {
    write_metrics((dir / "pretrain_metrics.csv").string(), rows);
    throw;
  }
  write_metrics((dir / "pretrain_metrics.csv").string(), rows);
  save_agent(agent, (dir / "pretrain.ckpt").string());
}

void run_finetune(const ExperimentConfig& config, const std::string& out_dir,
                  std::optional<std::size_t> steps, const std::string& resume) {
  if (resume.empty()) throw std::invalid_argument("finetune needs --resume <checkpoint>");
  const Task task = make_task(config.task, config.embedding_seed);
  const TransitionDataset data = read_dataset(path_or(config.finetune_path, out_dir, "finetune.infd"));
  Agent agent = load_agent(config, task, resume);
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  std::vector<MetricsRow> rows;
  try {
    finetune(agent, config, task, data, remaining(steps, config.finetune_steps, agent.finetune_step), rows);
  } catch (...) {
    write_metrics((dir / "finetune_metrics.csv").string(), rows);
    throw;
  }
  write_metrics((dir / "finetune_metrics.csv").string(), rows);
  save_agent(agent, (dir / "finetune.ckpt").string());
}

EvalResult run_evaluate(const ExperimentConfig& config, const std::string& checkpoint) {
  const Task task = make_task(config.task, config.embedding_seed);
  const Agent agent = load_agent(config, task, checkpoint);
  return evaluate_policy(agent.policy, task, config.eval_episodes, eval_horizon(config, task),
                         config.seed, agent.finetune_step);
}

}  // namespace infom
