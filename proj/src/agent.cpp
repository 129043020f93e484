#include "infom/agent.hpp"

#include <stdexcept>

namespace infom {

namespace {

constexpr double kFormatVersion = 1.0;

void export_set(ParamSet& out, const std::string& prefix, const ParamSet& params) {
  for (const auto& [name, t] : params) out.emplace(prefix + name, t);
}

void export_adam(ParamSet& out, const std::string& prefix, const AdamState& state) {
  export_set(out, prefix + "m/", state.first_moment);
  export_set(out, prefix + "v/", state.second_moment);
  out.emplace(prefix + "step", Tensor::scalar(static_cast<double>(state.step)));
}

const Tensor& fetch(const ParamSet& tensors, const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw std::runtime_error("checkpoint is missing " + name);
  return it->second;
}

void import_set(const ParamSet& tensors, const std::string& prefix, ParamSet& params) {
  for (auto& [name, t] : params) {
    const Tensor& stored = fetch(tensors, prefix + name);
    if (!stored.same_shape(t)) throw std::runtime_error("checkpoint shape mismatch for " + prefix + name);
    t = stored;
  }
}

void import_adam(const ParamSet& tensors, const std::string& prefix, AdamState& state) {
  import_set(tensors, prefix + "m/", state.first_moment);
  import_set(tensors, prefix + "v/", state.second_moment);
  state.step = static_cast<std::uint64_t>(fetch(tensors, prefix + "step").item());
}

std::uint64_t counter(const ParamSet& tensors, const std::string& name) {
  return static_cast<std::uint64_t>(fetch(tensors, name).item());
}

}  // namespace

Agent Agent::create(const ExperimentConfig& config, std::size_t state_dim, std::size_t action_dim) {
  config.validate();
  Rng rng = Rng::derive(config.seed, Stream::Init);
  Agent agent;
  agent.encoder = IntentionEncoder::create(state_dim, action_dim, config.latent_dim, config.hidden, rng);
  agent.vf = VectorFieldModel::create(state_dim, action_dim, config.latent_dim, config.hidden, rng);
  agent.vf_target = agent.vf;
  agent.reward = RewardPredictor::create(state_dim, config.hidden, rng);
  agent.critic = Critic::create(state_dim, action_dim, config.hidden, rng);
  agent.policy = PolicyModel::create(state_dim, action_dim, config.hidden, rng);
  agent.encoder_opt = AdamState::zeros_for(agent.encoder.params);
  agent.vf_opt = AdamState::zeros_for(agent.vf.params);
  agent.reward_opt = AdamState::zeros_for(agent.reward.params);
  agent.critic_opt = AdamState::zeros_for(agent.critic.params);
  agent.policy_opt = AdamState::zeros_for(agent.policy.params);
  agent.config_hash = config.model_hash();
  return agent;
}

void Agent::reset_policy(const ExperimentConfig& config) {
  Rng rng = Rng::derive(config.seed, Stream::Init, 1);
  policy = PolicyModel::create(policy.config.input_dim, policy.config.output_dim, config.hidden, rng);
  policy_opt = AdamState::zeros_for(policy.params);
}

ParamSet Agent::to_tensors() const {
  ParamSet out;
  export_set(out, "encoder/", encoder.params);
  export_set(out, "vf/", vf.params);
  export_set(out, "vf_target/", vf_target.params);
  export_set(out, "reward/", reward.params);
  export_set(out, "critic/", critic.params);
  export_set(out, "policy/", policy.params);
  export_adam(out, "adam/encoder/", encoder_opt);
  export_adam(out, "adam/vf/", vf_opt);
  export_adam(out, "adam/reward/", reward_opt);
  export_adam(out, "adam/critic/", critic_opt);
  export_adam(out, "adam/policy/", policy_opt);
  out.emplace("meta/format_version", Tensor::scalar(kFormatVersion));
  out.emplace("meta/pretrain_step", Tensor::scalar(static_cast<double>(pretrain_step)));
  out.emplace("meta/finetune_step", Tensor::scalar(static_cast<double>(finetune_step)));
  // Split so each half is exactly representable as a double.
  out.emplace("meta/config_hash_hi", Tensor::scalar(static_cast<double>(config_hash >> 32)));
  out.emplace("meta/config_hash_lo", Tensor::scalar(static_cast<double>(config_hash & 0xffffffffULL)));
  return out;
}

Agent Agent::from_tensors(const ExperimentConfig& config, std::size_t state_dim,
                          std::size_t action_dim, const ParamSet& tensors) {
  if (fetch(tensors, "meta/format_version").item() != kFormatVersion)
    throw std::runtime_error("unsupported checkpoint format version");
  const std::uint64_t hash = (counter(tensors, "meta/config_hash_hi") << 32) | counter(tensors, "meta/config_hash_lo");
  if (hash != config.model_hash())
    throw std::runtime_error("checkpoint config hash does not match the current config");
  Agent agent = create(config, state_dim, action_dim);
  import_set(tensors, "encoder/", agent.encoder.params);
  import_set(tensors, "vf/", agent.vf.params);
  import_set(tensors, "vf_target/", agent.vf_target.params);
  import_set(tensors, "reward/", agent.reward.params);
  import_set(tensors, "critic/", agent.critic.params);
  import_set(tensors, "policy/", agent.policy.params);
  import_adam(tensors, "adam/encoder/", agent.encoder_opt);
  import_adam(tensors, "adam/vf/", agent.vf_opt);
  import_adam(tensors, "adam/reward/", agent.reward_opt);
  import_adam(tensors, "adam/critic/", agent.critic_opt);
  import_adam(tensors, "adam/policy/", agent.policy_opt);
  agent.pretrain_step = counter(tensors, "meta/pretrain_step");
  agent.finetune_step = counter(tensors, "meta/finetune_step");
  if (agent.to_tensors().size() != tensors.size())
    throw std::runtime_error("checkpoint has tensors this config does not define");
  return agent;
}

}  // namespace infom
