#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <string>
#include <vector>

#include "reenact/checkpoint.hpp"
#include "reenact/metrics.hpp"
#include "reenact/model.hpp"
#include "reenact/trainer.hpp"

namespace reenact {

// ---------------------------------------------------------------------------
// reports
// ---------------------------------------------------------------------------

struct EvalReport {
  Confusion confusion;
  double balanced_accuracy = 0;
  double acc_class0 = 0;
  double acc_class1 = 0;
  double auc_value = 0;
  std::vector<RocPoint> roc;
  std::int64_t n = 0;
};

/// Report from per-sample class-1 scores: argmax predictions (ties to class
/// 0), confusion counts, class-balanced accuracy, ROC and AUC.
inline EvalReport evaluate_scores(const std::vector<double>& class1,
                                  const std::vector<int>& labels) {
  require_both_classes(labels, "evaluate");
  EvalReport r;
  r.n = static_cast<std::int64_t>(labels.size());
  r.confusion = confusion_from_scores(class1, labels);
  r.acc_class0 = r.confusion.acc_class0();
  r.acc_class1 = r.confusion.acc_class1();
  r.balanced_accuracy = r.confusion.balanced_accuracy();
  r.roc = roc_curve(class1, labels);
  double area = 0;
  for (std::size_t i = 1; i < r.roc.size(); ++i)
    area += (r.roc[i].fpr - r.roc[i - 1].fpr) *
            (r.roc[i].tpr + r.roc[i - 1].tpr) / 2.0;
  r.auc_value = area;
  return r;
}

/// Fused-head evaluation of a prepared split.
template <class Real>
EvalReport evaluate(MultiStreamModel<Real>& model,
                    const PreparedData<Real>& data) {
  const auto scores = score_prepared(model, data);
  return evaluate_scores(scores.fused_class1, scores.labels);
}

inline void write_eval_csv(const EvalReport& r, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write report: " + path);
  f << std::setprecision(10);
  f << "metric,value\n";
  f << "balanced_accuracy," << r.balanced_accuracy << "\n";
  f << "acc_class0," << r.acc_class0 << "\n";
  f << "acc_class1," << r.acc_class1 << "\n";
  f << "auc," << r.auc_value << "\n";
  f << "tn," << r.confusion.tn << "\n";
  f << "fp," << r.confusion.fp << "\n";
  f << "fn," << r.confusion.fn << "\n";
  f << "tp," << r.confusion.tp << "\n";
  f << "n," << r.n << "\n";
}

inline void write_roc_csv(const std::vector<RocPoint>& roc,
                          const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write ROC: " + path);
  f << std::setprecision(10);
  f << "threshold,fpr,tpr\n";
  for (const auto& p : roc)
    f << p.threshold << ',' << p.fpr << ',' << p.tpr << "\n";
}

// ---------------------------------------------------------------------------
// cross-compression matrix
// ---------------------------------------------------------------------------

/// Entry (r,c): balanced accuracy of the model trained at level r evaluated
/// on the split prepared at level c.
template <class Real>
std::array<std::array<double, 3>, 3> cross_compression_matrix(
    std::array<MultiStreamModel<Real>, 3>& models,
    std::array<PreparedData<Real>, 3>& test_sets) {
  std::array<std::array<double, 3>, 3> m{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      m[r][c] = evaluate(models[r], test_sets[c]).balanced_accuracy;
  return m;
}

inline void write_matrix_csv(const std::array<std::array<double, 3>, 3>& m,
                             const std::array<std::string, 3>& level_names,
                             const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write matrix: " + path);
  f << std::setprecision(10);
  f << "train\\test";
  for (const auto& n : level_names) f << ',' << n;
  f << "\n";
  for (int r = 0; r < 3; ++r) {
    f << level_names[r];
    for (int c = 0; c < 3; ++c) f << ',' << m[r][c];
    f << "\n";
  }
}

// ---------------------------------------------------------------------------
// frozen-score linear fusion
// ---------------------------------------------------------------------------

/// L2-regularized linear classifier over frozen per-stream scores, trained
/// with logistic loss by full-batch Adam (a margin-based linear separator in
/// place of an external SVM solver).
struct FrozenLinearFusion {
  std::vector<double> w;  // [2 * d]
  std::vector<double> b;  // [2]
  int dim = 0;
  std::vector<int> degenerate_columns;  // constant feature columns (reported)

  static FrozenLinearFusion fit(const std::vector<std::vector<double>>& feats,
                                const std::vector<int>& labels,
                                double l2 = 1e-3, int iters = 400,
                                double lr = 0.05) {
    if (feats.empty()) throw std::invalid_argument("FrozenLinearFusion: no data");
    require_both_classes(labels, "FrozenLinearFusion");
    const std::int64_t m = static_cast<std::int64_t>(feats.size());
    const std::int64_t d = static_cast<std::int64_t>(feats[0].size());

    FrozenLinearFusion out;
    out.dim = static_cast<int>(d);
    for (std::int64_t j = 0; j < d; ++j) {
      const double v0 = feats[0][j];
      bool constant = true;
      for (std::int64_t i = 1; i < m && constant; ++i)
        constant = feats[i][j] == v0;
      if (constant) out.degenerate_columns.push_back(static_cast<int>(j));
    }

    std::vector<double> xd(static_cast<std::size_t>(m * d));
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < d; ++j) xd[i * d + j] = feats[i][j];
    auto x = Tensor<double>::from_vector({m, d}, std::move(xd));
    auto w = Tensor<double>::zeros({2, d}, true);
    auto bias = Tensor<double>::zeros({2}, true);

    std::vector<NamedParam<double>> params{{"w", w}, {"b", bias}};
    AdamState<double> adam(params);
    for (int it = 0; it < iters; ++it) {
      auto loss = add(cross_entropy_mean(linear(x, w, bias), labels),
                      scale(sum(mul(w, w)), l2));
      backward(loss);
      adam_step(params, adam, lr);
      for (auto& p : params) p.tensor.zero_grad();
    }
    out.w = w.values();
    out.b = bias.values();
    return out;
  }

  /// Class-1 probability per sample.
  std::vector<double> scores(const std::vector<std::vector<double>>& feats) const {
    std::vector<double> out(feats.size());
    for (std::size_t i = 0; i < feats.size(); ++i) {
      double l0 = b[0], l1 = b[1];
      for (int j = 0; j < dim; ++j) {
        l0 += w[j] * feats[i][j];
        l1 += w[dim + j] * feats[i][j];
      }
      const double mx = std::max(l0, l1);
      const double e0 = std::exp(l0 - mx), e1 = std::exp(l1 - mx);
      out[i] = e1 / (e0 + e1);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// stream ablations
// ---------------------------------------------------------------------------

struct AblationRow {
  std::string name;
  double balanced_accuracy = 0;
};

namespace detail {

/// Feature selection from the 10-d concatenated logits.
inline std::vector<std::vector<double>> select_stream_features(
    const ScoreSet& s, const std::vector<int>& stream_ids /*1-based*/) {
  std::vector<std::vector<double>> out(s.concat_logits.size());
  for (std::size_t i = 0; i < s.concat_logits.size(); ++i) {
    for (int id : stream_ids) {
      out[i].push_back(s.concat_logits[i][2 * (id - 1)]);
      out[i].push_back(s.concat_logits[i][2 * (id - 1) + 1]);
    }
  }
  return out;
}

inline double frozen_fusion_accuracy(const ScoreSet& train_scores,
                                     const ScoreSet& eval_scores,
                                     const std::vector<int>& stream_ids) {
  const auto train_f = select_stream_features(train_scores, stream_ids);
  const auto eval_f = select_stream_features(eval_scores, stream_ids);
  const auto fusion = FrozenLinearFusion::fit(train_f, train_scores.labels);
  return confusion_from_scores(fusion.scores(eval_f), eval_scores.labels)
      .balanced_accuracy();
}

}  // namespace detail

/// Standalone accuracy per stream plus combination rows built by frozen-score
/// linear fusion (fit on the train split, reported on the eval split).
template <class Real>
std::vector<AblationRow> ablate_streams(MultiStreamModel<Real>& model,
                                        const PreparedData<Real>& train_data,
                                        const PreparedData<Real>& eval_data) {
  const auto train_scores = score_prepared(model, train_data);
  const auto eval_scores = score_prepared(model, eval_data);

  static const std::array<const char*, 5> stream_names = {
      "face", "left_eye", "right_eye", "left_cheek", "right_cheek"};

  std::vector<AblationRow> rows;
  for (int s = 0; s < 5; ++s) {
    rows.push_back({stream_names[s],
                    confusion_from_scores(eval_scores.stream_class1[s],
                                          eval_scores.labels)
                        .balanced_accuracy()});
  }
  rows.push_back({"regional", detail::frozen_fusion_accuracy(
                                  train_scores, eval_scores, {2, 3, 4, 5})});
  for (int s = 2; s <= 5; ++s) {
    rows.push_back({std::string("face+") + stream_names[s - 1],
                    detail::frozen_fusion_accuracy(train_scores, eval_scores,
                                                   {1, s})});
  }
  return rows;
}

inline void write_ablation_csv(const std::vector<AblationRow>& rows,
                               const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write ablation table: " + path);
  f << std::setprecision(10);
  f << "row,balanced_accuracy\n";
  for (const auto& r : rows) f << r.name << ',' << r.balanced_accuracy << "\n";
}

// ---------------------------------------------------------------------------
// score-fusion ablation
// ---------------------------------------------------------------------------

struct FusionAblationRow {
  std::string classifiers;  // "regional" or "all"
  std::string fusion;       // "linear" or "proposed"
  double balanced_accuracy = 0;
};

struct FusionAblationResult {
  std::vector<FusionAblationRow> rows;
  std::vector<int> degenerate_columns;
};

/// Compares frozen-score linear fusion (regional-only and all-stream) with
/// the end-to-end fused head on the same eval split.
template <class Real>
FusionAblationResult fusion_ablation(MultiStreamModel<Real>& model,
                                     const PreparedData<Real>& train_data,
                                     const PreparedData<Real>& eval_data) {
  const auto train_scores = score_prepared(model, train_data);
  const auto eval_scores = score_prepared(model, eval_data);

  FusionAblationResult res;
  {
    const auto tf = detail::select_stream_features(train_scores, {2, 3, 4, 5});
    const auto ef = detail::select_stream_features(eval_scores, {2, 3, 4, 5});
    const auto fusion = FrozenLinearFusion::fit(tf, train_scores.labels);
    res.rows.push_back(
        {"regional", "linear",
         confusion_from_scores(fusion.scores(ef), eval_scores.labels)
             .balanced_accuracy()});
    for (int c : fusion.degenerate_columns) res.degenerate_columns.push_back(c);
  }
  {
    const auto tf =
        detail::select_stream_features(train_scores, {1, 2, 3, 4, 5});
    const auto ef =
        detail::select_stream_features(eval_scores, {1, 2, 3, 4, 5});
    const auto fusion = FrozenLinearFusion::fit(tf, train_scores.labels);
    res.rows.push_back(
        {"all", "linear",
         confusion_from_scores(fusion.scores(ef), eval_scores.labels)
             .balanced_accuracy()});
  }
  res.rows.push_back(
      {"all", "proposed",
       confusion_from_scores(eval_scores.fused_class1, eval_scores.labels)
           .balanced_accuracy()});
  return res;
}

inline void write_fusion_ablation_csv(const FusionAblationResult& res,
                                      const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write fusion ablation: " + path);
  f << std::setprecision(10);
  f << "classifiers,fusion,balanced_accuracy\n";
  for (const auto& r : res.rows)
    f << r.classifiers << ',' << r.fusion << ',' << r.balanced_accuracy << "\n";
}

// ---------------------------------------------------------------------------
// class activation maps
// ---------------------------------------------------------------------------

struct CamHeatmap {
  int stream = 1;  // 1..5
  int cls = 0;     // 0 original, 1 altered
  int grid_h = 0, grid_w = 0;
  std::vector<double> grid;  // [grid_h * grid_w], min-max normalized to [0,1]
  ImageF heat;               // bilinear upsample to model resolution (1 ch)
  ImageU8 overlay;           // heat blended over the input region
};

/// Head-weighted sum of the final conv maps for one stream and class:
///   heat = sum_k w[cls,k] * F_k, min-max normalized (constant maps -> 0).
template <class Real>
CamHeatmap cam(MultiStreamModel<Real>& model, const RegionSet& rs, int stream,
               int cls) {
  if (cls != 0 && cls != 1)
    throw std::invalid_argument("cam: class must be 0 or 1");
  NoGradGuard ng;
  const auto batch = to_batch<Real>(rs);
  auto out = model.stream_forward(stream, batch.x[stream - 1], false);

  const auto& fm = out.feature_maps;  // [1,C,h,w]
  const std::int64_t C = fm.dim(1), h = fm.dim(2), w = fm.dim(3);
  const auto& head_w = model.stream_head(stream).w;  // [2,C]

  CamHeatmap cm;
  cm.stream = stream;
  cm.cls = cls;
  cm.grid_h = static_cast<int>(h);
  cm.grid_w = static_cast<int>(w);
  cm.grid.assign(static_cast<std::size_t>(h * w), 0.0);
  for (std::int64_t c = 0; c < C; ++c) {
    const double wk = static_cast<double>(head_w.data()[cls * C + c]);
    const Real* plane = fm.data() + c * h * w;
    for (std::int64_t i = 0; i < h * w; ++i)
      cm.grid[i] += wk * static_cast<double>(plane[i]);
  }
  double lo = cm.grid[0], hi = cm.grid[0];
  for (double v : cm.grid) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi > lo) {
    for (double& v : cm.grid) v = (v - lo) / (hi - lo);
  } else {
    for (double& v : cm.grid) v = 0.0;
  }

  ImageF grid_img(cm.grid_h, cm.grid_w, 1);
  for (std::size_t i = 0; i < cm.grid.size(); ++i)
    grid_img.px[i] = static_cast<float>(cm.grid[i]);
  const int S = rs.resolution();
  cm.heat = resize_bilinear(grid_img, S, S);

  // Overlay: blue -> green -> red ramp over the input region.
  const ImageF& base = rs.regions[stream - 1];
  cm.overlay = ImageU8(S, S, 3);
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      const double t = std::clamp<double>(cm.heat.at(y, x, 0), 0.0, 1.0);
      const double r = std::clamp(1.5 - std::abs(4 * t - 3.0), 0.0, 1.0);
      const double g = std::clamp(1.5 - std::abs(4 * t - 2.0), 0.0, 1.0);
      const double b = std::clamp(1.5 - std::abs(4 * t - 1.0), 0.0, 1.0);
      const double heat_col[3] = {255 * r, 255 * g, 255 * b};
      for (int c = 0; c < 3; ++c) {
        const double base_px = 255.0 * std::clamp<double>(base.at(y, x, c), 0, 1);
        cm.overlay.at(y, x, c) = clamp_u8(0.55 * base_px + 0.45 * heat_col[c]);
      }
    }
  return cm;
}

/// The sample's artifact mask mapped through the same crop+resize as the
/// full-face region, thresholded back to binary.
inline std::vector<bool> mask_at_model_resolution(const ImageU8& mask,
                                                  const FaceBox& box,
                                                  double margin, int S) {
  const ImageU8 cropped = square_crop(mask, box, margin);
  const ImageF resized = resize_bilinear(to_float(cropped), S, S);
  std::vector<bool> out(static_cast<std::size_t>(S) * S);
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) out[y * S + x] = resized.at(y, x, 0) > 127.5f;
  return out;
}

/// Mean heat inside the mask divided by mean heat outside (upsampled CAM).
inline double cam_region_ratio(const CamHeatmap& cm,
                               const std::vector<bool>& mask) {
  const int S = cm.heat.h;
  if (static_cast<std::size_t>(S) * S != mask.size())
    throw std::invalid_argument("cam_region_ratio: mask resolution mismatch");
  double in_sum = 0, out_sum = 0;
  std::int64_t in_n = 0, out_n = 0;
  for (int i = 0; i < S * S; ++i) {
    if (mask[i]) {
      in_sum += cm.heat.px[i];
      ++in_n;
    } else {
      out_sum += cm.heat.px[i];
      ++out_n;
    }
  }
  if (in_n == 0 || out_n == 0) return 0.0;
  const double in_mean = in_sum / in_n;
  const double out_mean = out_sum / out_n;
  if (out_mean <= 0) return in_mean > 0 ? std::numeric_limits<double>::infinity() : 0.0;
  return in_mean / out_mean;
}

// ---------------------------------------------------------------------------
// lambda sweep
// ---------------------------------------------------------------------------

struct LambdaSweepRow {
  double lambda = 0;
  double balanced_accuracy = 0;
};

/// Trains one model per lambda from the same seed and reports test-split
/// balanced accuracy. Ordering of rows follows the given lambdas.
template <class Real>
std::vector<LambdaSweepRow> lambda_sweep(const BackboneConfig& bb,
                                         const PreparedData<Real>& train_data,
                                         const PreparedData<Real>& val_data,
                                         const PreparedData<Real>& test_data,
                                         const TrainConfig<Real>& base_cfg,
                                         const std::vector<double>& lambdas,
                                         std::ostream* log = nullptr) {
  if (lambdas.empty())
    throw std::invalid_argument("lambda_sweep: need at least one lambda");
  std::vector<LambdaSweepRow> rows;
  for (double lam : lambdas) {
    TrainConfig<Real> cfg = base_cfg;
    cfg.lambda = static_cast<Real>(lam);
    MultiStreamModel<Real> model(bb, base_cfg.seed);
    train(model, train_data, val_data, cfg, log);
    rows.push_back({lam, evaluate(model, test_data).balanced_accuracy});
  }
  return rows;
}

inline void write_lambda_csv(const std::vector<LambdaSweepRow>& rows,
                             const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write lambda sweep: " + path);
  f << std::setprecision(10);
  f << "lambda,balanced_accuracy\n";
  for (const auto& r : rows) f << r.lambda << ',' << r.balanced_accuracy << "\n";
}

}  // namespace reenact
