#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "reenact/errors.hpp"
#include "reenact/tensor.hpp"

namespace reenact {

/// A trainable tensor with a stable name (used for checkpoints, Adam
/// diagnostics and shape reporting).
template <class Real>
struct NamedParam {
  std::string name;
  Tensor<Real> tensor;
};

/// First/second moment estimates per parameter plus the shared step count.
template <class Real>
struct AdamState {
  Real beta1 = Real(0.9);
  Real beta2 = Real(0.999);
  Real epsilon = Real(1e-8);
  std::int64_t step_count = 0;
  std::vector<std::vector<Real>> first_moment;
  std::vector<std::vector<Real>> second_moment;

  AdamState() = default;
  explicit AdamState(const std::vector<NamedParam<Real>>& params) {
    first_moment.reserve(params.size());
    second_moment.reserve(params.size());
    for (const auto& p : params) {
      first_moment.emplace_back(p.tensor.size(), Real(0));
      second_moment.emplace_back(p.tensor.size(), Real(0));
    }
  }
};

/// One bias-corrected Adam update over all parameters. Gradients are read
/// from each tensor's grad buffer and left untouched (clear them per batch).
template <class Real>
void adam_step(std::vector<NamedParam<Real>>& params, AdamState<Real>& state,
               Real lr) {
  if (!(lr > Real(0))) throw std::invalid_argument("adam_step: lr must be > 0");
  if (state.first_moment.size() != params.size())
    throw std::invalid_argument("adam_step: state does not match parameter set");

  state.step_count += 1;
  const Real bc1 =
      Real(1) - std::pow(state.beta1, static_cast<Real>(state.step_count));
  const Real bc2 =
      Real(1) - std::pow(state.beta2, static_cast<Real>(state.step_count));

  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& t = params[p].tensor;
    auto& g = t.grad();
    auto& m = state.first_moment[p];
    auto& v = state.second_moment[p];
    if (m.size() != g.size())
      throw std::invalid_argument("adam_step: moment shape mismatch for " +
                                  params[p].name);
    Real* w = t.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(static_cast<double>(g[i])))
        throw NumericError("adam_step: non-finite gradient in parameter '" +
                           params[p].name + "' at element " + std::to_string(i));
      m[i] = state.beta1 * m[i] + (Real(1) - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (Real(1) - state.beta2) * g[i] * g[i];
      const Real mhat = m[i] / bc1;
      const Real vhat = v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

}  // namespace reenact
