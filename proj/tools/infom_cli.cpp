#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "infom/config.hpp"
#include "infom/oracle_check.hpp"
#include "infom/pipeline.hpp"

using namespace infom;

int main(int argc, char** argv) {
  CLI::App app{"Intention-conditioned flow occupancy models on desk-scale tasks"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "run", resume;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "config file (defaults apply when omitted)");
    cmd->add_option("--seed", seed, "override run.seed");
    cmd->add_option("--out", out_dir, "output directory")->capture_default_str();
  };
  CLI::App* gen = app.add_subcommand("gen-data", "write pretrain.infd / finetune.infd and debug CSVs");
  CLI::App* pre = app.add_subcommand("pretrain", "pre-train encoder and occupancy model");
  CLI::App* fin = app.add_subcommand("finetune", "fine-tune reward, critic and policy");
  CLI::App* eval = app.add_subcommand("evaluate", "roll out the policy of a checkpoint");
  CLI::App* oracle = app.add_subcommand("oracle-check", "exact-oracle report; exit 1 if any entry fails");
  for (CLI::App* cmd : {gen, pre, fin, eval, oracle}) add_common(cmd);
  for (CLI::App* cmd : {pre, fin}) cmd->add_option("--steps", steps, "iterations for this invocation");
  pre->add_option("--resume", resume, "checkpoint to continue from");
  fin->add_option("--resume", resume, "pre-trained or fine-tuning checkpoint")->required();
  eval->add_option("--resume", resume, "checkpoint to evaluate")->required();
  oracle->add_option("--resume", resume, "trained checkpoint; adds occupancy TV entries");

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig config = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    if (seed) config.seed = *seed;
    config.validate();

    if (gen->parsed()) {
      run_gen_data(config, out_dir);
    } else if (pre->parsed()) {
      run_pretrain(config, out_dir, steps, resume);
    } else if (fin->parsed()) {
      run_finetune(config, out_dir, steps, resume);
    } else if (eval->parsed()) {
      const EvalResult r = run_evaluate(config, resume);
      std::printf("episodes %zu mean %.6g std %.6g\n", r.returns.size(), r.mean, r.std);
    } else if (oracle->parsed()) {
      std::optional<Agent> agent;
      if (!resume.empty()) agent = load_agent(config, make_task(config.task, config.embedding_seed), resume);
      const OracleReport report = oracle_check(config, agent ? &*agent : nullptr);
      std::fputs(report.to_text().c_str(), stdout);
      return report.passed() ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
