#pragma once

// Tape-based reverse-mode automatic differentiation over dense tensors.
//
// A Tape records every forward operation together with a closure that
// propagates the output gradient to its inputs. Parameters enter the tape via
// Tape::param(), which binds them by identity (the address of the tensor held
// in a ParamSet); everything else enters as a constant. backward() walks the
// tape once in reverse, returns gradients for the requested parameter sets and
// clears the tape. Parameters that never reached the loss get zero gradients.

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <unordered_map>
#include <vector>

#include "infom/tensor.hpp"

namespace infom {

class Tape;

/// Handle to a node on a Tape. Invalidated when the tape is cleared.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  Tape& tape() const;
  std::size_t id() const { return id_; }
  bool valid() const;

  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id, std::uint64_t generation)
      : tape_(tape), id_(id), generation_(generation) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
  std::uint64_t generation_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A value that receives no gradient.
  Var constant(Tensor value);
  /// A trainable leaf bound to `param` by identity. Binding the same tensor
  /// twice returns the same node.
  Var param(const Tensor& param);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  std::uint64_t generation() const { return generation_; }

  /// Records an op output. `parents` decide whether the node needs a gradient.
  Var push(Tensor value, std::initializer_list<std::size_t> parents, BackwardFn backward,
           const char* op);
  Var push(Tensor value, const std::vector<std::size_t>& parents, BackwardFn backward,
           const char* op);

  /// Upstream gradient of a node during the backward sweep.
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  /// Gradient accumulator of a parent; zero-initialized on first access.
  Tensor& grad_accumulator(std::size_t id);

  /// Runs the reverse sweep from a scalar loss. Does not clear the tape.
  void run_backward(Var loss);
  /// Gradient of a bound parameter after run_backward(), or nullptr.
  const Tensor* param_grad(const Tensor& param) const;

  void clear();

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
  };

  // deque keeps value references stable while the tape grows.
  std::deque<Node> nodes_;
  std::unordered_map<const Tensor*, std::size_t> bound_;
  std::uint64_t generation_ = 1;
};

// ---- differentiable ops -------------------------------------------------

Var matmul(Var a, Var b);
/// x[m,n] + bias[n] broadcast over rows.
Var add_bias(Var x, Var bias);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double factor);
Var add_scalar(Var a, double value);
Var gelu(Var a);
Var layer_norm(Var x, Var gain, Var bias);
Var concat_cols(std::initializer_list<Var> parts);
Var slice_cols(Var x, std::size_t begin, std::size_t end);
Var exp(Var a);
Var square(Var a);
/// Elementwise clamp; gradient is zero where the input was clamped.
Var clamp(Var a, double lo, double hi);
Var sum(Var a);
Var mean(Var a);
/// Sum over columns: [m,n] -> [m,1].
Var row_sum(Var a);
/// Elementwise minimum; ties route the gradient to `a`.
Var minimum(Var a, Var b);
/// Asymmetric squared loss |mu - 1(x<0)| x^2, elementwise.
Var expectile(Var x, double mu);
Var repeat_rows(Var x, std::size_t times);
/// Same value, no gradient flows back through it.
Var detach(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double f, Var a) { return scale(a, f); }
inline Var operator-(Var a) { return neg(a); }

// ---- gradients -----------------------------------------------------------

/// Gradients of a scalar loss for every tensor in `params`. Clears the tape.
ParamSet backward(Var loss, const ParamSet& params);
std::vector<ParamSet> backward(Var loss, std::initializer_list<const ParamSet*> params);

/// Builds a scalar loss on the given tape from the given parameters. Must be
/// deterministic: any stochastic inputs are sampled beforehand and captured.
using LossBuilder = std::function<Var(Tape&, const ParamSet&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares analytic gradients to central differences on up to
/// `max_coordinates` coordinates sampled with `seed`. Relative error is
/// |analytic - numeric| / (|analytic| + |numeric| + 1e-12).
GradCheckResult finite_difference_check(const LossBuilder& f, ParamSet& params, double eps,
                                        std::size_t max_coordinates = 100,
                                        std::uint64_t seed = 0);

}  // namespace infom
