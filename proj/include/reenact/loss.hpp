#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "reenact/model.hpp"
#include "reenact/ops.hpp"
#include "reenact/tensor.hpp"

namespace reenact {

/// Component view of the training objective:
///   l_total = l_r[0] + (l_r[1] + l_r[2] + l_r[3] + l_r[4]) + lambda * l_fusion
/// where l_r[0] is the full-face term and l_r[1..4] the regional terms.
template <class Real>
struct LossBreakdown {
  std::array<Real, 5> l_r{};
  Real l_fusion = 0;
  Real lambda = 0;
  Real l_total = 0;
};

/// Cross-entropy of a single 2-way logit pair against label y, computed from
/// the softmax with the predicted probability clamped at 1e-12.
template <class Real>
Real cross_entropy_from_logits(const std::array<Real, 2>& logits, int y) {
  if (y != 0 && y != 1)
    throw std::invalid_argument("cross_entropy_from_logits: y must be 0 or 1");
  const Real mx = std::max(logits[0], logits[1]);
  const Real e0 = std::exp(logits[0] - mx);
  const Real e1 = std::exp(logits[1] - mx);
  const Real p = (y == 0 ? e0 : e1) / (e0 + e1);
  return -std::log(std::max(p, Real(1e-12)));
}

template <class Real>
struct TotalLoss {
  Tensor<Real> value;  // scalar, differentiable
  LossBreakdown<Real> breakdown;
};

/// Batch-mean objective over the five stream heads plus the lambda-weighted
/// fusion head. The breakdown is always materialized so per-stream bias
/// stays observable in training logs.
template <class Real>
TotalLoss<Real> total_loss(const StreamOutputs<Real>& outputs,
                           const std::vector<int>& labels, Real lambda) {
  if (!(lambda >= Real(0)))
    throw std::invalid_argument("total_loss: lambda must be >= 0");

  TotalLoss<Real> out;
  out.breakdown.lambda = lambda;

  Tensor<Real> acc;
  for (int s = 0; s < 5; ++s) {
    Tensor<Real> term = cross_entropy_mean(outputs.stream_logits[s], labels);
    out.breakdown.l_r[s] = term.item();
    acc = (s == 0) ? term : add(acc, term);
  }
  Tensor<Real> fusion_term = cross_entropy_mean(outputs.fused_logits, labels);
  out.breakdown.l_fusion = fusion_term.item();
  out.value = add(acc, scale(fusion_term, lambda));
  out.breakdown.l_total = out.value.item();
  return out;
}

/// The fusion-only objective (the ablation the balanced loss exists to fix).
template <class Real>
TotalLoss<Real> fusion_only_loss(const StreamOutputs<Real>& outputs,
                                 const std::vector<int>& labels) {
  TotalLoss<Real> out;
  for (int s = 0; s < 5; ++s) {
    NoGradGuard ng;
    out.breakdown.l_r[s] =
        cross_entropy_mean(outputs.stream_logits[s], labels).item();
  }
  out.value = cross_entropy_mean(outputs.fused_logits, labels);
  out.breakdown.l_fusion = out.value.item();
  out.breakdown.lambda = 1;
  out.breakdown.l_total = out.value.item();
  return out;
}

}  // namespace reenact
