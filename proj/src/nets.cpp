#include "infom/nets.hpp"

#include <cmath>
#include <numbers>

#include "infom/kernels.hpp"

namespace infom {

namespace {

std::string dense_name(const std::string& prefix, std::size_t i, const char* leaf) {
  return prefix + "dense_" + std::to_string(i) + "/" + leaf;
}

std::string norm_name(const std::string& prefix, std::size_t i, const char* leaf) {
  return prefix + "norm_" + std::to_string(i) + "/" + leaf;
}

const Tensor& lookup(const ParamSet& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw std::invalid_argument("missing parameter " + name);
  return it->second;
}

}  // namespace

void MlpConfig::validate() const {
  if (input_dim == 0 || output_dim == 0) throw std::invalid_argument("MlpConfig: zero dimension");
  if (hidden.empty()) throw std::invalid_argument("MlpConfig: need at least one hidden layer");
  for (std::size_t h : hidden)
    if (h == 0) throw std::invalid_argument("MlpConfig: zero hidden width");
}

ParamSet init_mlp(const MlpConfig& config, Rng& rng, const std::string& prefix) {
  config.validate();
  ParamSet params;
  auto kernel = [&](std::size_t fan_in, std::size_t fan_out) {
    Tensor w = Tensor::matrix(fan_in, fan_out);
    const double std = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : w.data()) v = std * rng.normal();
    return w;
  };
  std::size_t in = config.input_dim;
  for (std::size_t i = 0; i < config.hidden.size(); ++i) {
    const std::size_t out = config.hidden[i];
    params.emplace(dense_name(prefix, i, "kernel"), kernel(in, out));
    params.emplace(dense_name(prefix, i, "bias"), Tensor({out}, 0.0));
    if (config.layer_norm) {
      params.emplace(norm_name(prefix, i, "scale"), Tensor({out}, 1.0));
      params.emplace(norm_name(prefix, i, "bias"), Tensor({out}, 0.0));
    }
    in = out;
  }
  params.emplace(prefix + "out/kernel", kernel(in, config.output_dim));
  params.emplace(prefix + "out/bias", Tensor({config.output_dim}, 0.0));
  return params;
}

Var mlp_forward(Tape& tape, const ParamSet& params, const MlpConfig& config, Var input,
                const std::string& prefix) {
  if (input.cols() != config.input_dim) {
    throw std::invalid_argument("mlp_forward: input width " + std::to_string(input.cols()) +
                                " != " + std::to_string(config.input_dim));
  }
  Var h = input;
  for (std::size_t i = 0; i < config.hidden.size(); ++i) {
    h = add_bias(matmul(h, tape.param(lookup(params, dense_name(prefix, i, "kernel")))),
                 tape.param(lookup(params, dense_name(prefix, i, "bias"))));
    if (config.layer_norm) {
      h = layer_norm(h, tape.param(lookup(params, norm_name(prefix, i, "scale"))),
                     tape.param(lookup(params, norm_name(prefix, i, "bias"))));
    }
    h = gelu(h);
  }
  return add_bias(matmul(h, tape.param(lookup(params, prefix + "out/kernel"))),
                  tape.param(lookup(params, prefix + "out/bias")));
}

Tensor mlp_forward(const ParamSet& params, const MlpConfig& config, const Tensor& input,
                   const std::string& prefix) {
  if (input.cols() != config.input_dim) {
    throw std::invalid_argument("mlp_forward: input width " + std::to_string(input.cols()) +
                                " != " + std::to_string(config.input_dim));
  }
  Tensor h = input;
  for (std::size_t i = 0; i < config.hidden.size(); ++i) {
    h = kernels::matmul(h, lookup(params, dense_name(prefix, i, "kernel")));
    kernels::add_bias_inplace(h, lookup(params, dense_name(prefix, i, "bias")));
    if (config.layer_norm) {
      h = kernels::layer_norm(h, lookup(params, norm_name(prefix, i, "scale")),
                              lookup(params, norm_name(prefix, i, "bias")));
    }
    kernels::gelu_inplace(h);
  }
  Tensor out = kernels::matmul(h, lookup(params, prefix + "out/kernel"));
  kernels::add_bias_inplace(out, lookup(params, prefix + "out/bias"));
  kernels::check_finite(out, "mlp_forward");
  return out;
}

GaussianParams gaussian_head(Var output) {
  const std::size_t width = output.cols();
  if (width % 2 != 0) throw std::invalid_argument("gaussian_head: odd output width");
  const std::size_t d = width / 2;
  return GaussianParams{slice_cols(output, 0, d),
                        clamp(slice_cols(output, d, width), kLogStdMin, kLogStdMax)};
}

Var gaussian_sample(const GaussianParams& g, const Tensor& noise) {
  if (!noise.same_shape(g.mean.value())) {
    throw std::invalid_argument("gaussian_sample: noise shape " + noise.shape_string() +
                                " != mean shape " + g.mean.value().shape_string());
  }
  Tape& tape = g.mean.tape();
  return g.mean + exp(g.log_std) * tape.constant(noise);
}

Var gaussian_log_prob(const GaussianParams& g, Var x) {
  if (!x.value().same_shape(g.mean.value())) {
    throw std::invalid_argument("gaussian_log_prob: shape mismatch");
  }
  const double half_log_two_pi = 0.5 * std::log(2.0 * std::numbers::pi);
  Var z = (x - g.mean) * exp(-g.log_std);
  Var per_dim = add_scalar(g.log_std + 0.5 * square(z), half_log_two_pi);
  return -row_sum(per_dim);
}

Var kl_to_standard_normal(const GaussianParams& g) {
  // 0.5 * (mean^2 + sigma^2 - 1 - 2 log sigma)
  Var sigma_sq = exp(2.0 * g.log_std);
  Var per_dim = 0.5 * add_scalar(square(g.mean) + sigma_sq - 2.0 * g.log_std, -1.0);
  return row_sum(per_dim);
}

PolicyModel PolicyModel::create(std::size_t state_dim, std::size_t action_dim,
                                const std::vector<std::size_t>& hidden, Rng& rng) {
  PolicyModel model;
  model.config = MlpConfig{state_dim, hidden, action_dim, true, Activation::Gelu};
  model.params = init_mlp(model.config, rng);
  return model;
}

Var PolicyModel::mean(Tape& tape, const Tensor& states) const {
  return mlp_forward(tape, params, config, tape.constant(states));
}

Tensor PolicyModel::mean(const Tensor& states) const { return mlp_forward(params, config, states); }

GaussianParams PolicyModel::distribution(Tape& tape, const Tensor& states) const {
  Var m = mean(tape, states);
  return GaussianParams{m, tape.constant(Tensor(m.value().shape(), 0.0))};
}

}  // namespace infom
