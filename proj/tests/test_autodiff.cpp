#include <cmath>

#include "doctest.h"
#include "infom/autodiff.hpp"
#include "infom/kernels.hpp"
#include "infom/optim.hpp"
#include "infom/random.hpp"

using namespace infom;

namespace {

ParamSet random_params(std::uint64_t seed, std::vector<std::pair<std::string, std::vector<std::size_t>>> shapes) {
  Rng rng(seed);
  ParamSet params;
  for (auto& [name, shape] : shapes) {
    Tensor t(shape);
    for (double& v : t.data()) v = rng.normal();
    params.emplace(name, std::move(t));
  }
  return params;
}

}  // namespace

TEST_CASE("tensor shape must match data length") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5, 0.0)), std::invalid_argument);
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(Tensor::vector({1, 2, 3}).rows() == 1);
}

TEST_CASE("gradient of sum is ones") {
  ParamSet params{{"p", Tensor::vector({0.3, -2.0, 7.0})}};
  Tape tape;
  Var loss = sum(tape.param(params.at("p")));
  ParamSet grads = backward(loss, params);
  CHECK(grads.at("p") == Tensor::vector({1.0, 1.0, 1.0}));
  CHECK(tape.size() == 0);
}

TEST_CASE("gradient of half squared norm is the parameter") {
  ParamSet params{{"p", Tensor::vector({0.3, -2.0, 7.0})}};
  Tape tape;
  Var loss = 0.5 * sum(square(tape.param(params.at("p"))));
  ParamSet grads = backward(loss, params);
  CHECK(grads.at("p") == params.at("p"));
}

TEST_CASE("parameters absent from the tape get zero gradients") {
  ParamSet params{{"used", Tensor::vector({1.0, 2.0})}, {"unused", Tensor::matrix(2, 2, 3.0)}};
  Tape tape;
  Var loss = sum(tape.param(params.at("used")));
  ParamSet grads = backward(loss, params);
  CHECK(grads.at("unused") == Tensor::matrix(2, 2, 0.0));
}

TEST_CASE("backward rejects non-scalar losses") {
  ParamSet params{{"p", Tensor::vector({1.0, 2.0})}};
  Tape tape;
  Var v = square(tape.param(params.at("p")));
  CHECK_THROWS_AS(backward(v, params), std::invalid_argument);
}

TEST_CASE("non-finite forward values raise") {
  Tape tape;
  Var x = tape.constant(Tensor::vector({800.0}));
  CHECK_THROWS_AS(exp(x), NonFiniteError);
}

TEST_CASE("constants never receive gradients") {
  ParamSet params{{"w", Tensor::vector({2.0})}};
  Tensor frozen = Tensor::vector({5.0});
  Tape tape;
  Var c = tape.constant(frozen);
  Var loss = sum(tape.param(params.at("w")) * c);
  ParamSet grads = backward(loss, params);
  CHECK(grads.at("w")[0] == doctest::Approx(5.0));
}

TEST_CASE("detach blocks the gradient path") {
  ParamSet params{{"w", Tensor::vector({2.0})}};
  Tape tape;
  Var w = tape.param(params.at("w"));
  Var loss = sum(w * detach(w));
  ParamSet grads = backward(loss, params);
  CHECK(grads.at("w")[0] == doctest::Approx(2.0));
}

TEST_CASE("expectile op values and kink gradient") {
  ParamSet params{{"x", Tensor::vector({2.0, 1.0, -1.0, 0.0})}};
  Tape tape;
  Var e = expectile(tape.param(params.at("x")), 0.9);
  CHECK(e.value()[0] == doctest::Approx(0.9 * 4.0));
  CHECK(e.value()[1] == doctest::Approx(0.9));
  CHECK(e.value()[2] == doctest::Approx(0.1));
  CHECK(e.value()[3] == 0.0);
  ParamSet grads = backward(sum(e), params);
  CHECK(grads.at("x")[0] == doctest::Approx(2 * 0.9 * 2.0));
  CHECK(grads.at("x")[2] == doctest::Approx(2 * 0.1 * -1.0));
  CHECK(grads.at("x")[3] == 0.0);

  Tape bad;
  CHECK_THROWS_AS(expectile(bad.constant(Tensor::vector({1.0})), 1.0), std::invalid_argument);
  CHECK_THROWS_AS(expectile(bad.constant(Tensor::vector({1.0})), 0.4), std::invalid_argument);
}

TEST_CASE("minimum routes ties to the first argument") {
  ParamSet params{{"a", Tensor::vector({1.0, 3.0})}, {"b", Tensor::vector({1.0, 2.0})}};
  Tape tape;
  Var m = minimum(tape.param(params.at("a")), tape.param(params.at("b")));
  auto grads = backward(sum(m), {&params});
  CHECK(grads[0].at("a") == Tensor::vector({1.0, 0.0}));
  CHECK(grads[0].at("b") == Tensor::vector({0.0, 1.0}));
}

TEST_CASE("finite differences agree on sum of squares") {
  ParamSet params = random_params(1, {{"a", {3, 4}}, {"b", {5}}});
  LossBuilder f = [](Tape& tape, const ParamSet& p) {
    return sum(square(tape.param(p.at("a")))) + sum(square(tape.param(p.at("b"))));
  };
  GradCheckResult r = finite_difference_check(f, params, 1e-5);
  CHECK(r.max_rel_error < 1e-8);
  CHECK(r.coordinates == 17);
}

TEST_CASE("finite differences agree through every op") {
  ParamSet params = random_params(2, {{"w", {3, 4}},
                                      {"b", {4}},
                                      {"g", {4}},
                                      {"h", {4}},
                                      {"x", {5, 3}},
                                      {"y", {5, 2}}});
  LossBuilder f = [](Tape& tape, const ParamSet& p) {
    Var x = tape.param(p.at("x"));
    Var h = add_bias(matmul(x, tape.param(p.at("w"))), tape.param(p.at("b")));
    h = layer_norm(h, tape.param(p.at("g")), tape.param(p.at("h")));
    h = gelu(h);
    Var y = tape.param(p.at("y"));
    Var cat = concat_cols({h, y});
    Var left = slice_cols(cat, 0, 3);
    Var right = slice_cols(cat, 3, 6);
    Var mixed = minimum(left, right) * exp(clamp(right, -0.5, 0.5));
    Var rows = row_sum(square(mixed) - left);
    return mean(expectile(add_scalar(repeat_rows(rows, 2), 0.1), 0.8)) + 0.3 * sum(-y);
  };
  GradCheckResult r = finite_difference_check(f, params, 1e-5, 100, 7);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("finite difference check detects non-deterministic losses") {
  ParamSet params{{"p", Tensor::vector({1.0})}};
  int calls = 0;
  LossBuilder f = [&calls](Tape& tape, const ParamSet& p) {
    ++calls;
    return scale(sum(tape.param(p.at("p"))), static_cast<double>(calls));
  };
  CHECK_THROWS_AS(finite_difference_check(f, params, 1e-5), std::runtime_error);
}

TEST_CASE("forward evaluation is bit-deterministic") {
  ParamSet params = random_params(3, {{"w", {4, 4}}, {"x", {8, 4}}});
  auto eval = [&] {
    Tape tape;
    return mean(gelu(matmul(tape.param(params.at("x")), tape.param(params.at("w"))))).value().item();
  };
  CHECK(eval() == eval());
}

TEST_CASE("taped and untaped kernels agree") {
  ParamSet params = random_params(4, {{"w", {4, 3}}, {"x", {6, 4}}});
  Tape tape;
  Var y = matmul(tape.param(params.at("x")), tape.param(params.at("w")));
  CHECK(y.value() == kernels::matmul(params.at("x"), params.at("w")));
}

TEST_CASE("adam first step moves each coordinate by about lr") {
  ParamSet params{{"p", Tensor::vector({1.0, -1.0, 0.5})}};
  ParamSet grads{{"p", Tensor::vector({0.3, -4.0, 1e-3})}};
  AdamState state = AdamState::zeros_for(params);
  adam_step(params, grads, state);
  CHECK(state.step == 1);
  CHECK(params.at("p")[0] == doctest::Approx(1.0 - 3e-4).epsilon(1e-6));
  CHECK(params.at("p")[1] == doctest::Approx(-1.0 + 3e-4).epsilon(1e-6));
  CHECK(params.at("p")[2] == doctest::Approx(0.5 - 3e-4 * 1e-3 / (1e-3 + 1e-8)).epsilon(1e-9));
}

TEST_CASE("adam with zero gradients is an exact no-op") {
  ParamSet params = random_params(5, {{"a", {3, 3}}});
  const ParamSet before = params;
  AdamState state = AdamState::zeros_for(params);
  for (int i = 0; i < 5; ++i) adam_step(params, zeros_like(params), state);
  CHECK(params == before);
  CHECK(state.step == 5);
}

TEST_CASE("adam validates its inputs") {
  ParamSet params{{"p", Tensor::vector({1.0})}};
  AdamState state = AdamState::zeros_for(params);
  CHECK_THROWS_AS(adam_step(params, ParamSet{{"p", Tensor::vector({1.0, 2.0})}}, state),
                  std::invalid_argument);
  CHECK_THROWS_AS(adam_step(params, ParamSet{{"p", Tensor::vector({NAN})}}, state),
                  std::invalid_argument);
  CHECK_THROWS_AS(adam_step(params, params, state, AdamConfig{.lr = 0.0}), std::invalid_argument);
}

TEST_CASE("polyak update") {
  ParamSet online = random_params(6, {{"a", {2, 2}}});
  ParamSet target = zeros_like(online);

  SUBCASE("tau 1 copies") {
    polyak_update(target, online, 1.0);
    CHECK(target == online);
  }
  SUBCASE("tau 0.005 from zero toward one") {
    ParamSet ones{{"a", Tensor::matrix(2, 2, 1.0)}};
    polyak_update(target, ones, 0.005);
    for (double v : target.at("a").data()) CHECK(v == doctest::Approx(0.005));
  }
  SUBCASE("gap shrinks geometrically") {
    for (int k = 1; k <= 50; ++k) polyak_update(target, online, 0.1);
    const double factor = std::pow(0.9, 50);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(online.at("a")[i] - target.at("a")[i] ==
            doctest::Approx(online.at("a")[i] * factor).epsilon(1e-9));
    }
  }
  SUBCASE("invalid tau") {
    CHECK_THROWS_AS(polyak_update(target, online, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(polyak_update(target, online, 1.5), std::invalid_argument);
  }
}

TEST_CASE("derived streams are reproducible and distinct") {
  Rng a = Rng::derive(42, Stream::Data, 7);
  Rng b = Rng::derive(42, Stream::Data, 7);
  Rng c = Rng::derive(42, Stream::FlowNoise, 7);
  const double x = a.normal();
  CHECK(x == b.normal());
  CHECK(x != c.normal());
}
