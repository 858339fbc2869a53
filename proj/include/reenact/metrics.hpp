#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace reenact {

struct RocPoint {
  double threshold;
  double fpr;
  double tpr;
};

/// Confusion counts for the binary task (class 1 = altered).
struct Confusion {
  std::int64_t tn = 0, fp = 0, fn = 0, tp = 0;

  double acc_class0() const {
    return tn + fp == 0 ? 0.0 : static_cast<double>(tn) / (tn + fp);
  }
  double acc_class1() const {
    return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
  }
  /// Mean of the per-class accuracies.
  double balanced_accuracy() const {
    return 0.5 * (acc_class0() + acc_class1());
  }
};

inline Confusion confusion_from_predictions(const std::vector<int>& preds,
                                            const std::vector<int>& labels) {
  if (preds.size() != labels.size())
    throw std::invalid_argument("confusion: prediction/label count mismatch");
  Confusion c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] == 0)
      (preds[i] == 0 ? c.tn : c.fp)++;
    else
      (preds[i] == 1 ? c.tp : c.fn)++;
  }
  return c;
}

/// Class-1 score above 0.5 predicts altered; exact ties go to class 0
/// (equivalent to argmax of the two softmax scores with ties to original).
inline int predict_from_score(double class1_score) {
  return class1_score > 0.5 ? 1 : 0;
}

inline void require_both_classes(const std::vector<int>& labels,
                                 const std::string& who) {
  bool has0 = false, has1 = false;
  for (int y : labels) {
    if (y == 0) has0 = true;
    else if (y == 1) has1 = true;
    else throw std::invalid_argument(who + ": labels must be 0 or 1");
  }
  if (!has0 || !has1)
    throw std::invalid_argument(who + ": both classes must be present");
}

/// ROC curve over all distinct score thresholds, from (0,0) to (1,1),
/// ordered by decreasing threshold. Equal scores move as one group, which
/// makes the trapezoid area equal to P(s_pos > s_neg) + 0.5 P(tie).
inline std::vector<RocPoint> roc_curve(const std::vector<double>& scores,
                                       const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("roc_curve: score/label count mismatch");
  require_both_classes(labels, "roc_curve");

  const std::int64_t n = static_cast<std::int64_t>(scores.size());
  std::int64_t pos = 0;
  for (int y : labels) pos += y;
  const std::int64_t neg = n - pos;

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });

  std::vector<RocPoint> pts;
  pts.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::int64_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      if (labels[order[i]] == 1) ++tp;
      else ++fp;
      ++i;
    }
    pts.push_back({s, static_cast<double>(fp) / neg,
                   static_cast<double>(tp) / pos});
  }
  return pts;
}

/// Trapezoidal area under the ROC curve.
inline double auc(const std::vector<double>& scores,
                  const std::vector<int>& labels) {
  const auto pts = roc_curve(scores, labels);
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    area += (pts[i].fpr - pts[i - 1].fpr) * (pts[i].tpr + pts[i - 1].tpr) / 2.0;
  return area;
}

}  // namespace reenact
