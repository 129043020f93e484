#include "infom/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace infom {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::uint64_t parse_u64(const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw std::invalid_argument("expected an unsigned integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw std::invalid_argument("expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("expected true/false, got '" + v + "'");
}

std::vector<std::size_t> parse_list(const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_u64(trim(item)));
  return out;
}

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

FinetuneMethod parse_method(const std::string& v) {
  if (v == "implicit_gpi") return FinetuneMethod::ImplicitGpi;
  if (v == "naive_gpi") return FinetuneMethod::NaiveGpi;
  if (v == "one_step_pi") return FinetuneMethod::OneStepPi;
  throw std::invalid_argument("unknown finetune method '" + v + "'");
}

struct Field {
  const char* section;
  const char* key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T>
Field size_field(const char* section, const char* key, T ExperimentConfig::*member) {
  return {section, key, [member](ExperimentConfig& c, const std::string& v) { c.*member = static_cast<T>(parse_u64(v)); },
          [member](const ExperimentConfig& c) { return std::to_string(c.*member); }};
}

Field double_field(const char* section, const char* key, double ExperimentConfig::*member) {
  return {section, key, [member](ExperimentConfig& c, const std::string& v) { c.*member = parse_double(v); },
          [member](const ExperimentConfig& c) { return fmt(c.*member); }};
}

Field bool_field(const char* section, const char* key, bool ExperimentConfig::*member) {
  return {section, key, [member](ExperimentConfig& c, const std::string& v) { c.*member = parse_bool(v); },
          [member](const ExperimentConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

Field string_field(const char* section, const char* key, std::string ExperimentConfig::*member) {
  return {section, key, [member](ExperimentConfig& c, const std::string& v) { c.*member = v; },
          [member](const ExperimentConfig& c) { return c.*member; }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      size_field("run", "seed", &ExperimentConfig::seed),
      bool_field("run", "wall_clock", &ExperimentConfig::wall_clock),
      string_field("env", "task", &ExperimentConfig::task),
      size_field("env", "embedding_seed", &ExperimentConfig::embedding_seed),
      string_field("env", "finetune_data", &ExperimentConfig::finetune_data),
      size_field("data", "pretrain_transitions", &ExperimentConfig::pretrain_transitions),
      size_field("data", "finetune_transitions", &ExperimentConfig::finetune_transitions),
      string_field("data", "pretrain_path", &ExperimentConfig::pretrain_path),
      string_field("data", "finetune_path", &ExperimentConfig::finetune_path),
      {"model", "hidden", [](ExperimentConfig& c, const std::string& v) { c.hidden = parse_list(v); },
       [](const ExperimentConfig& c) {
         std::string out;
         for (std::size_t i = 0; i < c.hidden.size(); ++i) out += (i ? "," : "") + std::to_string(c.hidden[i]);
         return out;
       }},
      size_field("model", "latent_dim", &ExperimentConfig::latent_dim),
      bool_field("model", "conditioned", &ExperimentConfig::conditioned),
      double_field("train", "gamma", &ExperimentConfig::gamma),
      double_field("train", "lr", &ExperimentConfig::lr),
      double_field("train", "tau", &ExperimentConfig::tau),
      size_field("train", "batch_size", &ExperimentConfig::batch_size),
      size_field("train", "euler_steps", &ExperimentConfig::euler_steps),
      double_field("train", "kl_coef", &ExperimentConfig::kl_coef),
      size_field("pretrain", "steps", &ExperimentConfig::pretrain_steps),
      bool_field("pretrain", "bc", &ExperimentConfig::pretrain_bc),
      size_field("finetune", "steps", &ExperimentConfig::finetune_steps),
      {"finetune", "method", [](ExperimentConfig& c, const std::string& v) { c.method = parse_method(v); },
       [](const ExperimentConfig& c) { return std::string(method_name(c.method)); }},
      size_field("finetune", "num_future_samples", &ExperimentConfig::num_future_samples),
      double_field("finetune", "expectile", &ExperimentConfig::expectile),
      double_field("finetune", "alpha", &ExperimentConfig::alpha),
      size_field("finetune", "gpi_latents", &ExperimentConfig::gpi_latents),
      size_field("finetune", "actor_every", &ExperimentConfig::actor_every),
      string_field("finetune", "policy_init", &ExperimentConfig::policy_init),
      bool_field("finetune", "update_occupancy", &ExperimentConfig::update_occupancy),
      size_field("eval", "episodes", &ExperimentConfig::eval_episodes),
      size_field("eval", "interval", &ExperimentConfig::eval_interval),
      size_field("eval", "horizon", &ExperimentConfig::eval_horizon),
      size_field("log", "interval", &ExperimentConfig::log_interval),
  };
  return table;
}

}  // namespace

const char* method_name(FinetuneMethod method) {
  switch (method) {
    case FinetuneMethod::ImplicitGpi: return "implicit_gpi";
    case FinetuneMethod::NaiveGpi: return "naive_gpi";
    case FinetuneMethod::OneStepPi: return "one_step_pi";
  }
  return "?";
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
  if (finetune_data != "same" && finetune_data != "perturbed") fail("env.finetune_data must be same or perturbed");
  if (pretrain_transitions == 0 || finetune_transitions == 0) fail("data sizes must be >= 1");
  if (hidden.empty()) fail("model.hidden needs at least one layer");
  for (std::size_t h : hidden)
    if (h == 0) fail("model.hidden sizes must be positive");
  if (latent_dim == 0) fail("model.latent_dim must be >= 1");
  if (!(gamma >= 0.0 && gamma < 1.0)) fail("train.gamma must be in [0, 1)");
  if (!(lr > 0.0)) fail("train.lr must be > 0");
  if (!(tau > 0.0 && tau <= 1.0)) fail("train.tau must be in (0, 1]");
  if (batch_size == 0) fail("train.batch_size must be >= 1");
  if (euler_steps == 0) fail("train.euler_steps must be >= 1");
  if (!(kl_coef >= 0.0)) fail("train.kl_coef must be >= 0");
  if (num_future_samples == 0) fail("finetune.num_future_samples must be >= 1");
  if (!(expectile >= 0.5 && expectile < 1.0)) fail("finetune.expectile must be in [0.5, 1)");
  if (!(alpha >= 0.0)) fail("finetune.alpha must be >= 0");
  if (gpi_latents == 0) fail("finetune.gpi_latents must be >= 1");
  if (actor_every == 0) fail("finetune.actor_every must be >= 1");
  if (policy_init != "random" && policy_init != "bc") fail("finetune.policy_init must be random or bc");
  if (policy_init == "bc" && !pretrain_bc) fail("finetune.policy_init = bc needs pretrain.bc = true");
  if (method == FinetuneMethod::OneStepPi && conditioned) fail("one_step_pi needs model.conditioned = false");
  if (eval_episodes == 0) fail("eval.episodes must be >= 1");
  if (eval_interval == 0) fail("eval.interval must be >= 1");
  if (log_interval == 0) fail("log.interval must be >= 1");
}

std::uint64_t ExperimentConfig::model_hash() const {
  std::string key = task + "|" + std::to_string(embedding_seed) + "|" + std::to_string(latent_dim) + "|" +
                    (conditioned ? "c" : "u") + "|";
  for (std::size_t h : hidden) key += std::to_string(h) + ",";
  // FNV-1a
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char ch : key) {
    hash ^= ch;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig config;
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto where = [&] { return "config line " + std::to_string(line_no) + ": "; };
    if (line.front() == '[') {
      if (line.back() != ']') throw std::invalid_argument(where() + "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument(where() + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Field* match = nullptr;
    for (const Field& f : fields())
      if (section == f.section && key == f.key) match = &f;
    if (!match) throw std::invalid_argument(where() + "unknown key '" + section + "." + key + "'");
    try {
      match->set(config, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where() + section + "." + key + ": " + e.what());
    }
  }
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string to_text(const ExperimentConfig& config) {
  std::string out, section;
  for (const Field& f : fields()) {
    if (section != f.section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += std::string(f.key) + " = " + f.get(config) + "\n";
  }
  return out;
}

}  // namespace infom
