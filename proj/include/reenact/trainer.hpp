#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "reenact/errors.hpp"
#include "reenact/loss.hpp"
#include "reenact/metrics.hpp"
#include "reenact/model.hpp"
#include "reenact/preprocess.hpp"
#include "reenact/synth.hpp"
#include "reenact/threading.hpp"

namespace reenact {

// ---------------------------------------------------------------------------
// prepared data
// ---------------------------------------------------------------------------

/// Preprocessed split held in memory: per stream one contiguous [M,3,S,S]
/// block in model precision, plus labels. Built once per (split, level).
template <class Real>
struct PreparedData {
  std::array<std::vector<Real>, 5> streams;
  std::vector<int> labels;
  std::int64_t count = 0;
  int resolution = 0;

  std::int64_t row_size() const {
    return static_cast<std::int64_t>(3) * resolution * resolution;
  }
};

/// Runs the full preprocessing pipeline over one split of a dataset.
/// Pure per sample, so samples are processed in parallel.
template <class Real>
PreparedData<Real> prepare_dataset(Dataset& ds, Split split,
                                   const CompressionLevel& level,
                                   const PreprocessConfig& cfg) {
  const auto idx = ds.split_indices(split);
  PreparedData<Real> out;
  out.count = static_cast<std::int64_t>(idx.size());
  out.resolution = cfg.resolution;
  const std::int64_t row = out.row_size();
  for (auto& s : out.streams)
    s.assign(static_cast<std::size_t>(out.count * row), Real(0));
  out.labels.resize(idx.size());

  parallel_for(static_cast<std::int64_t>(idx.size()), [&](std::int64_t i) {
    LabeledSample& sample = ds.samples[idx[i]];
    Frame frame;
    frame.pixels = sample_image(sample, ds.root);
    frame.frame_index = sample.frame_index;
    frame.video_id = sample.video_id;
    const RegionSet rs = make_region_set(frame, sample.box, level, cfg);
    for (int r = 0; r < 5; ++r) {
      Real* dst = out.streams[r].data() + i * row;
      const ImageF& img = rs.regions[r];
      const int S = cfg.resolution;
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < S; ++y)
          for (int x = 0; x < S; ++x)
            dst[(static_cast<std::int64_t>(c) * S + y) * S + x] =
                static_cast<Real>(img.at(y, x, c));
    }
    out.labels[i] = sample.label;
  });
  return out;
}

/// Gathers rows of a prepared split into a batch.
template <class Real>
RegionBatch<Real> assemble_batch(const PreparedData<Real>& data,
                                 const std::vector<std::int64_t>& rows) {
  const std::int64_t bs = static_cast<std::int64_t>(rows.size());
  const std::int64_t row = data.row_size();
  RegionBatch<Real> batch;
  for (int r = 0; r < 5; ++r) {
    batch.x[r] = Tensor<Real>({bs, 3, data.resolution, data.resolution});
    Real* dst = batch.x[r].data();
    for (std::int64_t n = 0; n < bs; ++n)
      std::memcpy(dst + n * row, data.streams[r].data() + rows[n] * row,
                  sizeof(Real) * static_cast<std::size_t>(row));
  }
  return batch;
}

// ---------------------------------------------------------------------------
// scoring (shared by the trainer's validation pass and the evaluator)
// ---------------------------------------------------------------------------

/// Per-sample class-1 scores for the fused head and each stream head, plus
/// the raw 10-d concatenated logits.
struct ScoreSet {
  std::vector<double> fused_class1;
  std::array<std::vector<double>, 5> stream_class1;
  std::vector<std::array<double, 10>> concat_logits;
  std::vector<int> labels;
};

template <class Real>
ScoreSet score_prepared(MultiStreamModel<Real>& model,
                        const PreparedData<Real>& data,
                        std::int64_t eval_batch = 64) {
  NoGradGuard ng;
  ScoreSet out;
  out.labels = data.labels;
  out.fused_class1.resize(data.count);
  for (auto& v : out.stream_class1) v.resize(data.count);
  out.concat_logits.resize(data.count);

  auto softmax1 = [](double l0, double l1) {
    const double m = std::max(l0, l1);
    const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
    return e1 / (e0 + e1);
  };

  for (std::int64_t start = 0; start < data.count; start += eval_batch) {
    const std::int64_t end = std::min(data.count, start + eval_batch);
    std::vector<std::int64_t> rows(end - start);
    for (std::int64_t i = start; i < end; ++i) rows[i - start] = i;
    auto outputs = model.forward(assemble_batch(data, rows), /*training=*/false);
    const std::int64_t bs = end - start;
    for (std::int64_t n = 0; n < bs; ++n) {
      const Real* fused = outputs.fused_logits.data() + n * 2;
      out.fused_class1[start + n] = softmax1(fused[0], fused[1]);
      for (int s = 0; s < 5; ++s) {
        const Real* sl = outputs.stream_logits[s].data() + n * 2;
        out.stream_class1[s][start + n] = softmax1(sl[0], sl[1]);
        out.concat_logits[start + n][2 * s] = static_cast<double>(sl[0]);
        out.concat_logits[start + n][2 * s + 1] = static_cast<double>(sl[1]);
      }
    }
  }
  return out;
}

inline Confusion confusion_from_scores(const std::vector<double>& class1,
                                       const std::vector<int>& labels) {
  std::vector<int> preds(class1.size());
  for (std::size_t i = 0; i < class1.size(); ++i)
    preds[i] = predict_from_score(class1[i]);
  return confusion_from_predictions(preds, labels);
}

template <class Real>
double balanced_accuracy_prepared(MultiStreamModel<Real>& model,
                                  const PreparedData<Real>& data) {
  const auto scores = score_prepared(model, data);
  return confusion_from_scores(scores.fused_class1, scores.labels)
      .balanced_accuracy();
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

template <class Real>
struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  Real base_lr = Real(1e-4);
  int decay_every = 10;
  Real decay_factor = Real(10);
  Real lambda = Real(1);
  std::uint64_t seed = 1;
  CompressionLevel level;   // compression of the training data (bookkeeping)
  bool fusion_only = false; // train with L_total = L_fusion (ablation)

  void validate() const {
    if (epochs < 0) throw ConfigError("TrainConfig: epochs must be >= 0");
    if (batch_size <= 0) throw ConfigError("TrainConfig: batch_size must be > 0");
    if (!(base_lr > Real(0))) throw ConfigError("TrainConfig: base_lr must be > 0");
    if (decay_every <= 0) throw ConfigError("TrainConfig: decay_every must be > 0");
    if (!(decay_factor > Real(0)))
      throw ConfigError("TrainConfig: decay_factor must be > 0");
    if (!(lambda >= Real(0))) throw ConfigError("TrainConfig: lambda must be >= 0");
  }
};

/// One gradient computation: forward, a detached fusion/loss graph, then the
/// five disjoint stream subgraph backwards in parallel. Gradient-identical
/// to backward(total_loss(forward(...))); the detach point exists so the
/// per-stream traversals can run concurrently.
template <class Real>
LossBreakdown<Real> compute_gradients(MultiStreamModel<Real>& model,
                                      const RegionBatch<Real>& batch,
                                      const std::vector<int>& labels,
                                      Real lambda, bool fusion_only) {
  auto outputs = model.forward(batch, true);
  std::array<Tensor<Real>, 5> z;
  for (int s = 0; s < 5; ++s) z[s] = outputs.stream_logits[s].detach(true);

  LossBreakdown<Real> breakdown;
  breakdown.lambda = fusion_only ? Real(1) : lambda;
  Tensor<Real> top;
  {
    std::vector<Tensor<Real>> parts(z.begin(), z.end());
    auto fused =
        linear(concat_cols(parts), model.fusion().w, model.fusion().b);
    auto fusion_ce = cross_entropy_mean(fused, labels);
    breakdown.l_fusion = fusion_ce.item();
    if (fusion_only) {
      NoGradGuard ng;
      for (int s = 0; s < 5; ++s)
        breakdown.l_r[s] = cross_entropy_mean(z[s], labels).item();
      top = fusion_ce;
    } else {
      Tensor<Real> acc;
      for (int s = 0; s < 5; ++s) {
        auto ce = cross_entropy_mean(z[s], labels);
        breakdown.l_r[s] = ce.item();
        acc = (s == 0) ? ce : add(acc, ce);
      }
      top = add(acc, scale(fusion_ce, lambda));
    }
  }
  breakdown.l_total = top.item();
  backward(top);

  // Seed each stream's logits with dL/dz and drain the disjoint subgraphs.
  for (int s = 0; s < 5; ++s) {
    auto& seed = outputs.stream_logits[s].grad();
    const auto& zg = z[s].grad();
    std::copy(zg.begin(), zg.end(), seed.begin());
  }
  parallel_for(5, [&](std::int64_t s) {
    backward_from(outputs.stream_logits[s]);
  });
  return breakdown;
}

/// Step decay: base_lr / decay_factor^floor(epoch / decay_every).
template <class Real>
Real lr_schedule(int epoch, const TrainConfig<Real>& cfg) {
  if (epoch < 0) throw std::invalid_argument("lr_schedule: epoch must be >= 0");
  const int steps = epoch / cfg.decay_every;
  return cfg.base_lr / std::pow(cfg.decay_factor, static_cast<Real>(steps));
}

template <class Real>
struct EpochStats {
  int epoch = 0;
  Real lr = 0;
  LossBreakdown<Real> train_loss;  // mean over the epoch's samples
  double val_balanced_accuracy = 0;
};

template <class Real>
struct TrainHistory {
  std::vector<EpochStats<Real>> epochs;
  int best_epoch = -1;
  double best_val_accuracy = 0;
};

template <class Real>
void write_history_csv(const TrainHistory<Real>& h, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write history: " + path);
  f << "epoch,l_r1,l_r2,l_r3,l_r4,l_r5,l_fusion,l_total,lr,"
       "val_balanced_accuracy\n";
  f << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& e : h.epochs) {
    f << e.epoch;
    for (int s = 0; s < 5; ++s) f << ',' << e.train_loss.l_r[s];
    f << ',' << e.train_loss.l_fusion << ',' << e.train_loss.l_total << ','
      << e.lr << ',' << e.val_balanced_accuracy << "\n";
  }
}

/// Seeded mini-batch training with Adam, per-epoch shuffling, step-decayed
/// learning rate and best-validation checkpoint retention (ties keep the
/// earlier epoch). Gradients are cleared after every step.
template <class Real>
TrainHistory<Real> train(MultiStreamModel<Real>& model,
                         const PreparedData<Real>& train_data,
                         const PreparedData<Real>& val_data,
                         const TrainConfig<Real>& cfg,
                         std::ostream* log = nullptr) {
  cfg.validate();
  TrainHistory<Real> history;
  if (cfg.epochs == 0) return history;
  require_both_classes(train_data.labels, "train (train split)");
  require_both_classes(val_data.labels, "train (val split)");

  AdamState<Real> adam(model.parameters());
  const Rng root(cfg.seed);
  std::vector<std::vector<Real>> best_snapshot;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const Real lr = lr_schedule(epoch, cfg);

    std::vector<std::int64_t> order(train_data.count);
    for (std::int64_t i = 0; i < train_data.count; ++i) order[i] = i;
    Rng shuffle_rng = root.fork("order").fork(static_cast<std::uint64_t>(epoch));
    shuffle(order, shuffle_rng);

    LossBreakdown<Real> epoch_loss;
    std::int64_t seen = 0;
    int batch_index = 0;
    for (std::int64_t start = 0; start < train_data.count;
         start += cfg.batch_size, ++batch_index) {
      const std::int64_t end =
          std::min<std::int64_t>(train_data.count, start + cfg.batch_size);
      std::vector<std::int64_t> rows(order.begin() + start, order.begin() + end);
      std::vector<int> labels(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i)
        labels[i] = train_data.labels[rows[i]];

      const auto breakdown =
          compute_gradients(model, assemble_batch(train_data, rows), labels,
                            cfg.lambda, cfg.fusion_only);
      if (!std::isfinite(static_cast<double>(breakdown.l_total)))
        throw NumericError("train: non-finite loss at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index));
      adam_step(model.parameters(), adam, lr);
      model.zero_grad();

      const Real bs = static_cast<Real>(rows.size());
      for (int s = 0; s < 5; ++s) epoch_loss.l_r[s] += breakdown.l_r[s] * bs;
      epoch_loss.l_fusion += breakdown.l_fusion * bs;
      epoch_loss.l_total += breakdown.l_total * bs;
      seen += static_cast<std::int64_t>(rows.size());
    }
    const Real inv = Real(1) / static_cast<Real>(seen);
    for (int s = 0; s < 5; ++s) epoch_loss.l_r[s] *= inv;
    epoch_loss.l_fusion *= inv;
    epoch_loss.l_total *= inv;
    epoch_loss.lambda = cfg.lambda;

    EpochStats<Real> stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.train_loss = epoch_loss;
    stats.val_balanced_accuracy = balanced_accuracy_prepared(model, val_data);
    history.epochs.push_back(stats);

    if (history.best_epoch < 0 ||
        stats.val_balanced_accuracy > history.best_val_accuracy) {
      history.best_epoch = epoch;
      history.best_val_accuracy = stats.val_balanced_accuracy;
      best_snapshot = model.snapshot();
    }
    if (log)
      (*log) << "epoch " << epoch << " lr " << lr << " l_total "
             << epoch_loss.l_total << " val_bacc "
             << stats.val_balanced_accuracy << "\n";
  }

  model.restore(best_snapshot);
  return history;
}

}  // namespace reenact
