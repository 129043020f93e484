#include "infom/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>

#include "infom/kernels.hpp"

namespace infom {

// ---- Var / Tape ------------------------------------------------------------

bool Var::valid() const { return tape_ != nullptr && tape_->generation() == generation_; }

const Tensor& Var::value() const {
  if (!valid()) throw std::logic_error("stale or empty Var");
  return tape_->value(id_);
}

Tape& Var::tape() const {
  if (!valid()) throw std::logic_error("stale or empty Var");
  return *tape_;
}

Var Tape::constant(Tensor value) {
  kernels::check_finite(value, "constant");
  nodes_.push_back(Node{std::move(value), Tensor{}, false, false, nullptr});
  return Var(this, nodes_.size() - 1, generation_);
}

Var Tape::param(const Tensor& param) {
  if (auto it = bound_.find(&param); it != bound_.end()) {
    return Var(this, it->second, generation_);
  }
  kernels::check_finite(param, "parameter");
  nodes_.push_back(Node{param, Tensor{}, false, true, nullptr});
  bound_.emplace(&param, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1, generation_);
}

Var Tape::push(Tensor value, std::initializer_list<std::size_t> parents, BackwardFn backward,
               const char* op) {
  kernels::check_finite(value, op);
  const bool needs = std::any_of(parents.begin(), parents.end(),
                                 [&](std::size_t p) { return nodes_[p].requires_grad; });
  nodes_.push_back(Node{std::move(value), Tensor{}, false, needs,
                        needs ? std::move(backward) : BackwardFn{}});
  return Var(this, nodes_.size() - 1, generation_);
}

Var Tape::push(Tensor value, const std::vector<std::size_t>& parents, BackwardFn backward,
               const char* op) {
  kernels::check_finite(value, op);
  const bool needs = std::any_of(parents.begin(), parents.end(),
                                 [&](std::size_t p) { return nodes_[p].requires_grad; });
  nodes_.push_back(Node{std::move(value), Tensor{}, false, needs,
                        needs ? std::move(backward) : BackwardFn{}});
  return Var(this, nodes_.size() - 1, generation_);
}

Tensor& Tape::grad_accumulator(std::size_t id) {
  Node& node = nodes_[id];
  if (!node.has_grad) {
    node.grad = Tensor(node.value.shape(), 0.0);
    node.has_grad = true;
  }
  return node.grad;
}

void Tape::run_backward(Var loss) {
  if (&loss.tape() != this) throw std::logic_error("loss belongs to another tape");
  if (loss.value().size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                loss.value().shape_string());
  }
  grad_accumulator(loss.id()).fill(1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_grad || !node.requires_grad || !node.backward) continue;
    node.backward(*this, i);
  }
}

const Tensor* Tape::param_grad(const Tensor& param) const {
  auto it = bound_.find(&param);
  if (it == bound_.end()) return nullptr;
  const Node& node = nodes_[it->second];
  return node.has_grad ? &node.grad : nullptr;
}

void Tape::clear() {
  nodes_.clear();
  bound_.clear();
  ++generation_;
}

// ---- ops -------------------------------------------------------------------

namespace {

bool wants(Tape& t, std::size_t id) { return t.requires_grad(id); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_string() +
                                " vs " + b.shape_string());
  }
}

Tape& common_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw std::logic_error("operands live on different tapes");
  return a.tape();
}

template <typename F>
Var unary_elementwise(Var a, const char* op, F&& forward_fn,
                      std::function<double(double x, double y)> derivative) {
  Tape& t = a.tape();
  Tensor out = a.value();
  for (double& v : out.data()) v = forward_fn(v);
  const std::size_t ia = a.id();
  return t.push(
      std::move(out), {ia},
      [ia, derivative](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        const Tensor& x = tp.value(ia);
        const Tensor& y = tp.value(self);
        Tensor& ga = tp.grad_accumulator(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * derivative(x[i], y[i]);
      },
      op);
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = common_tape(a, b);
  Tensor out = kernels::matmul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(
      std::move(out), {ia, ib},
      [ia, ib](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        if (wants(tp, ia)) {
          Tensor d = kernels::matmul_nt(g, tp.value(ib));
          Tensor& ga = tp.grad_accumulator(ia);
          for (std::size_t i = 0; i < d.size(); ++i) ga[i] += d[i];
        }
        if (wants(tp, ib)) {
          Tensor d = kernels::matmul_tn(tp.value(ia), g);
          Tensor& gb = tp.grad_accumulator(ib);
          for (std::size_t i = 0; i < d.size(); ++i) gb[i] += d[i];
        }
      },
      "matmul");
}

Var add_bias(Var x, Var bias) {
  Tape& t = common_tape(x, bias);
  Tensor out = x.value();
  kernels::add_bias_inplace(out, bias.value());
  const std::size_t ix = x.id(), ib = bias.id();
  return t.push(
      std::move(out), {ix, ib},
      [ix, ib](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        if (wants(tp, ix)) {
          Tensor& gx = tp.grad_accumulator(ix);
          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (wants(tp, ib)) {
          Tensor& gb = tp.grad_accumulator(ib);
          const std::size_t cols = g.cols();
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
        }
      },
      "add_bias");
}

Var add(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(
      std::move(out), {ia, ib},
      [ia, ib](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        for (std::size_t id : {ia, ib}) {
          if (!wants(tp, id)) continue;
          Tensor& acc = tp.grad_accumulator(id);
          for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
        }
      },
      "add");
}

Var sub(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(
      std::move(out), {ia, ib},
      [ia, ib](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        if (wants(tp, ia)) {
          Tensor& acc = tp.grad_accumulator(ia);
          for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
        }
        if (wants(tp, ib)) {
          Tensor& acc = tp.grad_accumulator(ib);
          for (std::size_t i = 0; i < g.size(); ++i) acc[i] -= g[i];
        }
      },
      "sub");
}

Var mul(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(
      std::move(out), {ia, ib},
      [ia, ib](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        if (wants(tp, ia)) {
          const Tensor& other = tp.value(ib);
          Tensor& acc = tp.grad_accumulator(ia);
          for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * other[i];
        }
        if (wants(tp, ib)) {
          const Tensor& other = tp.value(ia);
          Tensor& acc = tp.grad_accumulator(ib);
          for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * other[i];
        }
      },
      "mul");
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double factor) {
  return unary_elementwise(
      a, "scale", [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double value) {
  return unary_elementwise(
      a, "add_scalar", [value](double x) { return x + value; },
      [](double, double) { return 1.0; });
}

Var gelu(Var a) {
  return unary_elementwise(
      a, "gelu", [](double x) { return kernels::gelu(x); },
      [](double x, double) { return kernels::gelu_grad(x); });
}

Var exp(Var a) {
  return unary_elementwise(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var square(Var a) {
  return unary_elementwise(
      a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var clamp(Var a, double lo, double hi) {
  return unary_elementwise(
      a, "clamp", [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x < lo || x > hi) ? 0.0 : 1.0; });
}

Var expectile(Var x, double mu) {
  if (!(mu >= 0.5 && mu < 1.0)) throw std::invalid_argument("expectile: mu must be in [0.5, 1)");
  // Negative branch owns the kink: its derivative 2(1-mu)x is 0 at x = 0.
  return unary_elementwise(
      x, "expectile",
      [mu](double v) { return (v < 0.0 ? 1.0 - mu : mu) * v * v; },
      [mu](double v, double) { return 2.0 * (v < 0.0 ? 1.0 - mu : mu) * v; });
}

Var layer_norm(Var x, Var gain, Var bias) {
  Tape& t = common_tape(x, gain);
  auto normalized = std::make_shared<std::vector<double>>();
  auto inv_std = std::make_shared<std::vector<double>>();
  Tensor out =
      kernels::layer_norm(x.value(), gain.value(), bias.value(), normalized.get(), inv_std.get());
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return t.push(
      std::move(out), {ix, ig, ib},
      [ix, ig, ib, normalized, inv_std](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        const Tensor& gain_v = tp.value(ig);
        const std::size_t rows = g.rows();
        const std::size_t cols = g.cols();
        const auto& xhat = *normalized;
        if (wants(tp, ig)) {
          Tensor& gg = tp.grad_accumulator(ig);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gg[c] += g[r * cols + c] * xhat[r * cols + c];
        }
        if (wants(tp, ib)) {
          Tensor& gb = tp.grad_accumulator(ib);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
        }
        if (wants(tp, ix)) {
          Tensor& gx = tp.grad_accumulator(ix);
          const double n = static_cast<double>(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_dy = 0.0, mean_dy_xhat = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              const double dy = g[r * cols + c] * gain_v[c];
              mean_dy += dy;
              mean_dy_xhat += dy * xhat[r * cols + c];
            }
            mean_dy /= n;
            mean_dy_xhat /= n;
            const double inv = (*inv_std)[r];
            for (std::size_t c = 0; c < cols; ++c) {
              const double dy = g[r * cols + c] * gain_v[c];
              gx[r * cols + c] += inv * (dy - mean_dy - xhat[r * cols + c] * mean_dy_xhat);
            }
          }
        }
      },
      "layer_norm");
}

Var concat_cols(std::initializer_list<Var> parts) {
  if (parts.size() == 0) throw std::invalid_argument("concat_cols: no inputs");
  Tape& t = parts.begin()->tape();
  std::vector<const Tensor*> values;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    if (&p.tape() != &t) throw std::logic_error("operands live on different tapes");
    values.push_back(&p.value());
    ids.push_back(p.id());
    widths.push_back(p.value().cols());
  }
  const std::size_t rows = values.front()->rows();
  const std::size_t total = std::accumulate(widths.begin(), widths.end(), std::size_t{0});
  Tensor out = Tensor::matrix(rows, total);
  for (std::size_t r = 0; r < rows; ++r) {
    double* dst = out.raw() + r * total;
    for (std::size_t k = 0; k < values.size(); ++k) {
      if (values[k]->rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
      std::copy_n(values[k]->raw() + r * widths[k], widths[k], dst);
      dst += widths[k];
    }
  }
  return t.push(
      std::move(out), ids,
      [ids, widths, total](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        const std::size_t rows = g.rows();
        std::size_t offset = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (wants(tp, ids[k])) {
            Tensor& acc = tp.grad_accumulator(ids[k]);
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < widths[k]; ++c)
                acc[r * widths[k] + c] += g[r * total + offset + c];
          }
          offset += widths[k];
        }
      },
      "concat_cols");
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  Tape& t = x.tape();
  const Tensor& xv = x.value();
  const std::size_t cols = xv.cols();
  if (begin >= end || end > cols) throw std::invalid_argument("slice_cols: bad range");
  const std::size_t width = end - begin;
  Tensor out = Tensor::matrix(xv.rows(), width);
  for (std::size_t r = 0; r < xv.rows(); ++r)
    std::copy_n(xv.raw() + r * cols + begin, width, out.raw() + r * width);
  const std::size_t ix = x.id();
  return t.push(
      std::move(out), {ix},
      [ix, begin, width, cols](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        Tensor& acc = tp.grad_accumulator(ix);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < width; ++c) acc[r * cols + begin + c] += g[r * width + c];
      },
      "slice_cols");
}

Var sum(Var a) {
  Tape& t = a.tape();
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  const std::size_t ia = a.id();
  return t.push(
      Tensor::scalar(total), {ia},
      [ia](Tape& tp, std::size_t self) {
        const double g = tp.grad(self)[0];
        Tensor& acc = tp.grad_accumulator(ia);
        for (double& v : acc.data()) v += g;
      },
      "sum");
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw std::invalid_argument("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var row_sum(Var a) {
  Tape& t = a.tape();
  const Tensor& av = a.value();
  const std::size_t rows = av.rows(), cols = av.cols();
  Tensor out = Tensor::matrix(rows, 1);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += av[r * cols + c];
    out[r] = s;
  }
  const std::size_t ia = a.id();
  return t.push(
      std::move(out), {ia},
      [ia, cols](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        Tensor& acc = tp.grad_accumulator(ia);
        for (std::size_t r = 0; r < g.size(); ++r)
          for (std::size_t c = 0; c < cols; ++c) acc[r * cols + c] += g[r];
      },
      "row_sum");
}

Var minimum(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a.value(), b.value(), "minimum");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(out[i], bv[i]);
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(
      std::move(out), {ia, ib},
      [ia, ib](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        const Tensor& av = tp.value(ia);
        const Tensor& bv = tp.value(ib);
        if (wants(tp, ia)) {
          Tensor& acc = tp.grad_accumulator(ia);
          for (std::size_t i = 0; i < g.size(); ++i)
            if (av[i] <= bv[i]) acc[i] += g[i];
        }
        if (wants(tp, ib)) {
          Tensor& acc = tp.grad_accumulator(ib);
          for (std::size_t i = 0; i < g.size(); ++i)
            if (av[i] > bv[i]) acc[i] += g[i];
        }
      },
      "minimum");
}

Var repeat_rows(Var x, std::size_t times) {
  Tape& t = x.tape();
  Tensor out = infom::repeat_rows(x.value(), times);
  const std::size_t ix = x.id();
  return t.push(
      std::move(out), {ix},
      [ix, times](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        Tensor& acc = tp.grad_accumulator(ix);
        const std::size_t cols = acc.cols();
        for (std::size_t r = 0; r < acc.rows(); ++r)
          for (std::size_t k = 0; k < times; ++k)
            for (std::size_t c = 0; c < cols; ++c)
              acc[r * cols + c] += g[(r * times + k) * cols + c];
      },
      "repeat_rows");
}

Var detach(Var a) { return a.tape().constant(a.value()); }

// ---- gradients ---------------------------------------------------------------

std::vector<ParamSet> backward(Var loss, std::initializer_list<const ParamSet*> params) {
  Tape& t = loss.tape();
  t.run_backward(loss);
  std::vector<ParamSet> result;
  result.reserve(params.size());
  for (const ParamSet* set : params) {
    ParamSet grads;
    for (const auto& [name, p] : *set) {
      const Tensor* g = t.param_grad(p);
      Tensor copy = g ? *g : Tensor(p.shape(), 0.0);
      if (!copy.all_finite()) {
        t.clear();
        throw NonFiniteError("non-finite gradient for parameter " + name);
      }
      grads.emplace(name, std::move(copy));
    }
    result.push_back(std::move(grads));
  }
  t.clear();
  return result;
}

ParamSet backward(Var loss, const ParamSet& params) {
  return std::move(backward(loss, {&params}).front());
}

GradCheckResult finite_difference_check(const LossBuilder& f, ParamSet& params, double eps,
                                        std::size_t max_coordinates, std::uint64_t seed) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_difference_check: eps must be > 0");

  auto evaluate = [&]() {
    Tape tape;
    return f(tape, params).value().item();
  };

  const double base_a = evaluate();
  const double base_b = evaluate();
  if (base_a != base_b) {
    throw std::runtime_error("finite_difference_check: loss is not deterministic");
  }

  ParamSet analytic;
  {
    Tape tape;
    Var loss = f(tape, params);
    analytic = backward(loss, params);
  }

  std::vector<std::pair<std::string, std::size_t>> coords;
  for (const auto& [name, p] : params)
    for (std::size_t i = 0; i < p.size(); ++i) coords.emplace_back(name, i);
  if (coords.size() > max_coordinates) {
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_coordinates);
  }

  GradCheckResult result;
  result.coordinates = coords.size();
  for (const auto& [name, index] : coords) {
    double& x = params.at(name)[index];
    const double saved = x;
    x = saved + eps;
    const double plus = evaluate();
    x = saved - eps;
    const double minus = evaluate();
    x = saved;
    const double numeric = (plus - minus) / (2.0 * eps);
    const double a = analytic.at(name)[index];
    const double err = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-12);
    if (err > result.max_rel_error || result.worst_param.empty()) {
      if (err >= result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_param = name;
        result.worst_index = index;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace infom
