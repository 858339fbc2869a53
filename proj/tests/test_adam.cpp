// Adam update semantics against an independently coded scalar oracle.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "reenact/adam.hpp"
#include "reenact/rng.hpp"
#include "support/test_util.hpp"

using namespace reenact;
using T = Tensor<double>;

namespace {

/// Plain per-coordinate Adam, written from the update equations.
struct ScalarAdamOracle {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double m = 0, v = 0;
  int t = 0;

  double step(double w, double g, double lr) {
    t += 1;
    m = beta1 * m + (1 - beta1) * g;
    v = beta2 * v + (1 - beta2) * g * g;
    const double mhat = m / (1 - std::pow(beta1, t));
    const double vhat = v / (1 - std::pow(beta2, t));
    return w - lr * mhat / (std::sqrt(vhat) + eps);
  }
};

}  // namespace

TEST_CASE("zero gradients leave parameters unchanged", "[adam]") {
  auto w = T::from_vector({3}, {0.5, -1.0, 2.0}, true);
  std::vector<NamedParam<double>> params{{"w", w}};
  AdamState<double> state(params);
  w.zero_grad();
  for (int i = 0; i < 5; ++i) adam_step(params, state, 1e-3);
  REQUIRE(w.values() == std::vector<double>{0.5, -1.0, 2.0});
  REQUIRE(state.step_count == 5);
}

TEST_CASE("first step moves by about lr against the gradient", "[adam]") {
  auto w = T::zeros({1}, true);
  std::vector<NamedParam<double>> params{{"w", w}};
  AdamState<double> state(params);
  w.grad()[0] = 1.0;
  adam_step(params, state, 1e-3);
  // Bias correction makes mhat/sqrt(vhat) = 1 at step 1 (up to epsilon).
  REQUIRE(testutil::close(w[0], -1e-3, 1e-8));
}

TEST_CASE("sequence of steps matches the scalar oracle per coordinate",
          "[adam]") {
  Rng rng(77);
  const int dim = 6;
  auto w = T::zeros({dim}, true);
  for (auto& v : w.values()) v = rng.normal();
  std::vector<double> oracle_w = w.values();

  std::vector<NamedParam<double>> params{{"w", w}};
  AdamState<double> state(params);
  std::vector<ScalarAdamOracle> oracle(dim);

  for (int step = 0; step < 50; ++step) {
    const double lr = 0.01 / (1 + step / 10);
    auto& g = w.grad();
    for (int i = 0; i < dim; ++i) {
      g[i] = rng.normal();
      oracle_w[i] = oracle[i].step(oracle_w[i], g[i], lr);
    }
    adam_step(params, state, lr);
    w.zero_grad();
  }
  for (int i = 0; i < dim; ++i)
    REQUIRE(testutil::close(w[i], oracle_w[i], 1e-12));
}

TEST_CASE("non-finite gradient aborts naming the parameter", "[adam]") {
  auto good = T::zeros({2}, true);
  auto bad = T::zeros({2}, true);
  std::vector<NamedParam<double>> params{{"s1.head.w", good},
                                         {"fusion.w", bad}};
  AdamState<double> state(params);
  good.zero_grad();
  bad.grad()[1] = std::nan("");
  try {
    adam_step(params, state, 1e-3);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    REQUIRE(std::string(e.what()).find("fusion.w") != std::string::npos);
  }
}

TEST_CASE("bad learning rate is rejected", "[adam]") {
  auto w = T::zeros({1}, true);
  std::vector<NamedParam<double>> params{{"w", w}};
  AdamState<double> state(params);
  REQUIRE_THROWS_AS(adam_step(params, state, 0.0), std::invalid_argument);
}
