#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "infom/agent.hpp"
#include "infom/checkpoint.hpp"
#include "infom/config.hpp"

using namespace infom;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.hidden = {8, 8};
  c.latent_dim = 2;
  return c;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("config text round trip") {
  ExperimentConfig c;
  c.seed = 17;
  c.task = "fork";
  c.hidden = {32, 16, 8};
  c.gamma = 0.95;
  c.lr = 1.0 / 3.0;
  c.method = FinetuneMethod::NaiveGpi;
  c.policy_init = "bc";
  c.pretrain_bc = true;
  const std::string text = to_text(c);
  const ExperimentConfig back = parse_config(text);
  CHECK(to_text(back) == text);
  CHECK(back.lr == c.lr);
  CHECK(back.hidden == c.hidden);
  CHECK(back.method == FinetuneMethod::NaiveGpi);
}

TEST_CASE("config parsing accepts comments and rejects bad input") {
  const ExperimentConfig c = parse_config("# top\n[run]\nseed = 4  # trailing\n\n[train]\ngamma=0.5\n");
  CHECK(c.seed == 4);
  CHECK(c.gamma == 0.5);
  CHECK_THROWS(parse_config("[run]\nsed = 4\n"));
  CHECK_THROWS(parse_config("[train]\ngamma = 1.0\n"));
  CHECK_THROWS(parse_config("[train]\ngamma = abc\n"));
  CHECK_THROWS(parse_config("[run\nseed = 1\n"));
  CHECK_THROWS(parse_config("[run]\nseed\n"));
  CHECK_THROWS(parse_config("[finetune]\nmethod = greedy\n"));
  CHECK_THROWS(parse_config("[finetune]\nmethod = one_step_pi\n"));
  CHECK_NOTHROW(parse_config("[model]\nconditioned = false\n[finetune]\nmethod = one_step_pi\n"));
  CHECK_THROWS(parse_config("[finetune]\npolicy_init = bc\n"));
  CHECK_THROWS(parse_config("[model]\nhidden = 8,0\n"));
  CHECK_THROWS(load_config("/nonexistent/infom.cfg"));
}

TEST_CASE("model hash tracks shape-defining fields only") {
  ExperimentConfig a, b;
  b.lr = 0.1;
  b.seed = 99;
  CHECK(a.model_hash() == b.model_hash());
  b.latent_dim = a.latent_dim + 1;
  CHECK(a.model_hash() != b.model_hash());
  b = a;
  b.task = "fork";
  CHECK(a.model_hash() != b.model_hash());
}

TEST_CASE("checkpoint bytes round trip") {
  ParamSet p;
  p["b"] = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  p["a"] = Tensor({1}, {-0.1});
  const std::string bytes = serialize_checkpoint(p);
  CHECK(bytes.rfind("INFOM1", 0) == 0);
  const ParamSet back = deserialize_checkpoint(bytes);
  CHECK(back == p);
  CHECK(serialize_checkpoint(back) == bytes);
  CHECK_THROWS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)));
  CHECK_THROWS(deserialize_checkpoint("NOTCKP" + bytes.substr(6)));

  const std::string path = temp_path("infom_ckpt_test.ckpt");
  write_checkpoint(path, p);
  CHECK(read_checkpoint(path) == p);
  std::filesystem::remove(path);
  CHECK_THROWS(read_checkpoint(path));
}

TEST_CASE("agent save and restore") {
  const ExperimentConfig c = small_config();
  Agent agent = Agent::create(c, 2, 1);
  agent.pretrain_step = 12;
  agent.finetune_step = 3;
  agent.vf_opt.step = 12;
  const ParamSet tensors = agent.to_tensors();
  const Agent back = Agent::from_tensors(c, 2, 1, tensors);
  CHECK(back.to_tensors() == tensors);
  CHECK(back.pretrain_step == 12);
  CHECK(back.finetune_step == 3);
  CHECK(back.vf_opt.step == 12);

  ExperimentConfig other = c;
  other.latent_dim = 3;
  CHECK_THROWS(Agent::from_tensors(other, 2, 1, tensors));
  ParamSet missing = tensors;
  missing.erase(missing.begin());
  CHECK_THROWS(Agent::from_tensors(c, 2, 1, missing));
  ParamSet extra = tensors;
  extra["encoder/unused"] = Tensor({1}, {0.0});
  CHECK_THROWS(Agent::from_tensors(c, 2, 1, extra));
  CHECK_THROWS(Agent::from_tensors(c, 3, 1, tensors));
}

TEST_CASE("agent creation is seeded") {
  ExperimentConfig c = small_config();
  const ParamSet a = Agent::create(c, 2, 1).to_tensors();
  CHECK(Agent::create(c, 2, 1).to_tensors() == a);
  c.seed = 1;
  CHECK(Agent::create(c, 2, 1).to_tensors() != a);
}

TEST_CASE("target field starts as a copy and policy reset draws new weights") {
  const ExperimentConfig c = small_config();
  Agent agent = Agent::create(c, 2, 1);
  CHECK(agent.vf.params == agent.vf_target.params);
  const ParamSet before = agent.policy.params;
  agent.policy_opt.step = 7;
  agent.reset_policy(c);
  CHECK(agent.policy.params != before);
  CHECK(agent.policy_opt.step == 0);
}
