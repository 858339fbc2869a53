// Acceptance suite: one pass/fail line per criterion, nonzero exit if any
// fails. Heavier than the unit tests; it trains the desk-scale models that
// the qualitative criteria are defined over.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "reenact/checkpoint.hpp"
#include "reenact/eval.hpp"
#include "reenact/loss.hpp"
#include "reenact/synth.hpp"
#include "reenact/trainer.hpp"
#include "support/op_grad_suite.hpp"

using namespace reenact;

namespace {

int g_failures = 0;

void criterion(const std::string& name, bool ok, const std::string& detail) {
  std::printf("[%s] %-28s %s\n", ok ? "PASS" : "FAIL", name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

// -- criterion 1: gradient suite ---------------------------------------------

void check_gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  gradcheck::Result total;
  for (std::uint64_t cfg = 0; cfg < 20; ++cfg)
    total.merge(gradcheck::run_op_suite(cfg));
  total.merge(gradcheck::run_full_model_check(7));
  const double secs = seconds_since(t0);
  criterion("gradient-suite",
            total.ok && total.max_rel_err < 1e-4 && secs < 120.0,
            "max rel err " + fmt(total.max_rel_err) + " over " +
                std::to_string(total.checked) + " coords in " + fmt(secs) +
                " s (worst: " + total.worst + ")");
}

// -- criterion 2: loss identities --------------------------------------------

StreamOutputs<double> outputs_with_logits(double l0, double l1, int n) {
  StreamOutputs<double> out;
  std::vector<double> pair;
  for (int i = 0; i < n; ++i) {
    pair.push_back(l0);
    pair.push_back(l1);
  }
  for (int s = 0; s < 5; ++s)
    out.stream_logits[s] = Tensor<double>::from_vector({n, 2}, pair);
  out.fused_logits = Tensor<double>::from_vector({n, 2}, pair);
  return out;
}

void check_loss_identities() {
  bool ok = true;
  std::string detail;

  {  // lambda = 0 reduction, exact
    Rng rng(3);
    StreamOutputs<double> out;
    auto rand_logits = [&] {
      Tensor<double> t({4, 2});
      for (auto& v : t.values()) v = rng.normal() * 2;
      return t;
    };
    for (int s = 0; s < 5; ++s) out.stream_logits[s] = rand_logits();
    out.fused_logits = rand_logits();
    const std::vector<int> labels{0, 1, 0, 1};
    const auto r = total_loss(out, labels, 0.0);
    double stream_sum = 0;
    for (int s = 0; s < 5; ++s) stream_sum += r.breakdown.l_r[s];
    ok = ok && std::abs(r.breakdown.l_total - stream_sum) < 1e-12;

    // affine in lambda with slope l_fusion
    const auto r1 = total_loss(out, labels, 1.0);
    const auto r9 = total_loss(out, labels, 9.0);
    const double slope = (r9.breakdown.l_total - r1.breakdown.l_total) / 8.0;
    ok = ok && std::abs(slope - r1.breakdown.l_fusion) < 1e-10;
  }
  {  // 6 ln 2 fixture
    const auto out = outputs_with_logits(0, 0, 4);
    const auto r = total_loss(out, {0, 1, 0, 1}, 1.0);
    const double want = 4.158883;
    ok = ok && std::abs(r.breakdown.l_total - want) < 1e-5;
    detail = "6ln2 fixture " + fmt(r.breakdown.l_total);
  }
  {  // shift invariance of the cross entropy
    Rng rng(5);
    for (int t = 0; t < 100; ++t) {
      const double a = rng.normal() * 3, b = rng.normal() * 3;
      const double c = rng.normal() * 20;
      const int y = t % 2;
      const double d =
          std::abs(cross_entropy_from_logits<double>({a, b}, y) -
                   cross_entropy_from_logits<double>({a + c, b + c}, y));
      ok = ok && d < 1e-9;
    }
  }
  criterion("loss-identities", ok, detail);
}

// -- criterion 3: metric oracles ---------------------------------------------

double pairwise_auc_oracle(const std::vector<double>& scores,
                           const std::vector<int>& labels) {
  double num = 0;
  std::int64_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[i] != 1 || labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) num += 1.0;
      else if (scores[i] == scores[j]) num += 0.5;
    }
  return num / static_cast<double>(pairs);
}

void check_metric_oracles() {
  bool ok = true;
  std::int64_t patterns = 0;
  Rng rng(15);
  for (int n = 2; n <= 12 && ok; ++n) {
    std::vector<double> scores(n);
    for (int i = 0; i < n; ++i)
      scores[i] = std::round(rng.uniform() * 4.0) / 4.0;
    for (std::uint32_t pattern = 1; pattern + 1 < (1u << n); ++pattern) {
      std::vector<int> labels(n);
      for (int i = 0; i < n; ++i) labels[i] = (pattern >> i) & 1;
      ++patterns;
      if (std::abs(auc(scores, labels) - pairwise_auc_oracle(scores, labels)) >
          1e-12) {
        ok = false;
        break;
      }
    }
  }
  {  // duplication invariance
    Rng r2(8);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 40; ++i) {
      labels.push_back(i % 2);
      scores.push_back(r2.uniform());
    }
    const double base = evaluate_scores(scores, labels).balanced_accuracy;
    auto ds = scores;
    auto dl = labels;
    for (int i = 0; i < 40; ++i)
      if (labels[i] == 1) {
        ds.push_back(scores[i]);
        dl.push_back(1);
      }
    ok = ok && evaluate_scores(ds, dl).balanced_accuracy == base;
  }
  {  // hand-worked 6-sample confusion fixture
    const auto r = evaluate_scores({0.2, 0.6, 0.4, 0.8, 0.3, 0.9},
                                   {0, 0, 0, 1, 1, 1});
    ok = ok && r.confusion.tn == 2 && r.confusion.fp == 1 &&
         r.confusion.fn == 1 && r.confusion.tp == 2 &&
         std::abs(r.balanced_accuracy - 2.0 / 3.0) < 1e-12 &&
         std::abs(r.auc_value - 7.0 / 9.0) < 1e-12;
  }
  criterion("metric-oracles", ok,
            std::to_string(patterns) + " exhaustive AUC patterns checked");
}

// -- criteria 4-8: desk-scale runs -------------------------------------------

struct DeskRun {
  MultiStreamModel<float> model;
  TrainHistory<float> history;
  double test_accuracy = 0;
  double train_seconds = 0;
};

struct DeskContext {
  Dataset dataset;
  SynthConfig synth;
  BackboneConfig backbone;
  PreprocessConfig pp;
  TrainConfig<float> base_train;
};

DeskContext make_desk_context() {
  DeskContext ctx;
  ctx.synth = SynthConfig{};  // 100 videos, 70/15/15
  ctx.dataset = gen_dataset(ctx.synth);
  ctx.backbone = BackboneConfig::desk();  // widths 8/16/32, S = 64
  ctx.pp.resolution = ctx.backbone.input_resolution;
  ctx.base_train.batch_size = 32;
  ctx.base_train.base_lr = 1e-3f;
  ctx.base_train.decay_every = 10;
  ctx.base_train.decay_factor = 10;
  ctx.base_train.lambda = 1;
  ctx.base_train.seed = 11;
  return ctx;
}

DeskRun train_at(DeskContext& ctx, int qp, int epochs, bool fusion_only,
                 PreparedData<float>* test_out) {
  const auto level = CompressionLevel::from_qp(qp);
  auto train_p = prepare_dataset<float>(ctx.dataset, Split::train, level, ctx.pp);
  auto val_p = prepare_dataset<float>(ctx.dataset, Split::val, level, ctx.pp);

  DeskRun run{MultiStreamModel<float>(ctx.backbone, ctx.base_train.seed)};
  TrainConfig<float> cfg = ctx.base_train;
  cfg.epochs = epochs;
  cfg.level = level;
  cfg.fusion_only = fusion_only;

  const auto t0 = std::chrono::steady_clock::now();
  run.history = train(run.model, train_p, val_p, cfg);
  run.train_seconds = seconds_since(t0);

  auto test_p = prepare_dataset<float>(ctx.dataset, Split::test, level, ctx.pp);
  run.test_accuracy = evaluate(run.model, test_p).balanced_accuracy;
  if (test_out) *test_out = std::move(test_p);
  return run;
}

std::array<double, 5> stream_val_accuracies(DeskContext& ctx,
                                            MultiStreamModel<float>& model,
                                            int qp) {
  const auto level = CompressionLevel::from_qp(qp);
  auto val_p = prepare_dataset<float>(ctx.dataset, Split::val, level, ctx.pp);
  const auto scores = score_prepared(model, val_p);
  std::array<double, 5> out{};
  for (int s = 0; s < 5; ++s)
    out[s] = confusion_from_scores(scores.stream_class1[s], scores.labels)
                 .balanced_accuracy();
  return out;
}

void check_desk_criteria() {
  DeskContext ctx = make_desk_context();

  // Trained-and-tested-per-level models (the qualitative accuracy trend).
  PreparedData<float> test_no, test_easy, test_hard;
  auto run_no = train_at(ctx, 0, 8, false, &test_no);
  const bool within_20 = run_no.history.epochs.size() <= 20;
  criterion(
      "desk-learning(qp0)",
      within_20 && run_no.history.best_val_accuracy >= 0.95,
      "best val " + fmt(run_no.history.best_val_accuracy) + " after " +
          std::to_string(run_no.history.epochs.size()) + " epochs, " +
          fmt(run_no.train_seconds) + " s train");

  auto run_easy = train_at(ctx, 23, 10, false, &test_easy);
  auto run_hard = train_at(ctx, 40, 14, false, &test_hard);
  const double a0 = run_no.test_accuracy, a23 = run_easy.test_accuracy,
               a40 = run_hard.test_accuracy;
  criterion("desk-compression-trend",
            a0 >= a23 - 0.02 && a23 >= a40 - 0.02,
            "test acc " + fmt(a0) + " / " + fmt(a23) + " / " + fmt(a40) +
                " at qp 0/23/40");

  // Cross-compression matrix and the generalization asymmetry.
  std::array<MultiStreamModel<float>, 3> models{run_no.model, run_easy.model,
                                                run_hard.model};
  std::array<PreparedData<float>, 3> tests{std::move(test_no),
                                           std::move(test_easy),
                                           std::move(test_hard)};
  const auto matrix = cross_compression_matrix(models, tests);
  criterion("cross-compression-asymmetry", matrix[2][1] > matrix[1][2],
            "hard->easy " + fmt(matrix[2][1]) + " vs easy->hard " +
                fmt(matrix[1][2]));

  // Balanced-training effect at qp 0: per-stream competence plus the
  // fusion-only regression.
  const auto streams_balanced = stream_val_accuracies(ctx, run_no.model, 0);
  bool all_above = true;
  for (double a : streams_balanced) all_above = all_above && a > 0.55;

  auto run_fusion_only = train_at(ctx, 0, 8, true, nullptr);
  const auto streams_fusion =
      stream_val_accuracies(ctx, run_fusion_only.model, 0);
  bool some_regional_beats = false;
  for (int s = 1; s < 5; ++s)
    some_regional_beats =
        some_regional_beats || streams_balanced[s] > streams_fusion[s];
  std::string detail = "lambda=1 streams";
  for (double a : streams_balanced) detail += " " + fmt(a);
  detail += " | fusion-only";
  for (double a : streams_fusion) detail += " " + fmt(a);
  criterion("balanced-training-effect", all_above && some_regional_beats,
            detail);

  // Fusion ordering on the hard split.
  {
    const auto level = CompressionLevel::from_qp(40);
    auto train_p =
        prepare_dataset<float>(ctx.dataset, Split::train, level, ctx.pp);
    const auto res = fusion_ablation(run_hard.model, train_p, tests[2]);
    double proposed = 0, linear_all = 0;
    for (const auto& row : res.rows) {
      if (row.fusion == "proposed") proposed = row.balanced_accuracy;
      if (row.classifiers == "all" && row.fusion == "linear")
        linear_all = row.balanced_accuracy;
    }
    const auto eval_scores = score_prepared(run_hard.model, tests[2]);
    double best_single = 0;
    for (int s = 0; s < 5; ++s)
      best_single = std::max(
          best_single,
          confusion_from_scores(eval_scores.stream_class1[s], eval_scores.labels)
              .balanced_accuracy());
    criterion("fusion-ordering",
              proposed >= linear_all - 0.01 && linear_all >= best_single - 0.01,
              "proposed " + fmt(proposed) + " >= linear " + fmt(linear_all) +
                  " >= best stream " + fmt(best_single));
  }

  // CAM localization over >= 50 altered no-compression test samples.
  {
    const auto level = CompressionLevel::from_qp(0);
    double in_sum = 0, out_sum = 0;
    int used = 0;
    for (auto idx : ctx.dataset.split_indices(Split::test)) {
      auto& s = ctx.dataset.samples[idx];
      if (s.label != 1 || s.mask.empty()) continue;
      Frame frame;
      frame.pixels = s.image;
      frame.video_id = s.video_id;
      frame.frame_index = s.frame_index;
      const auto rs = make_region_set(frame, s.box, level, ctx.pp);
      const auto heat = cam(run_no.model, rs, 1, 1);
      const auto mask = mask_at_model_resolution(s.mask, s.box, ctx.pp.margin,
                                                 ctx.pp.resolution);
      double in = 0, out = 0;
      std::int64_t n_in = 0, n_out = 0;
      for (int i = 0; i < ctx.pp.resolution * ctx.pp.resolution; ++i) {
        if (mask[i]) {
          in += heat.heat.px[i];
          ++n_in;
        } else {
          out += heat.heat.px[i];
          ++n_out;
        }
      }
      if (n_in == 0 || n_out == 0) continue;
      in_sum += in / n_in;
      out_sum += out / n_out;
      ++used;
      if (used >= 60) break;
    }
    const double ratio = in_sum / std::max(out_sum, 1e-12);
    criterion("cam-localization", used >= 50 && ratio >= 1.5,
              "mean in/out ratio " + fmt(ratio) + " over " +
                  std::to_string(used) + " altered samples");
  }
}

// -- criterion 9: determinism and persistence --------------------------------

void check_determinism_persistence() {
  SynthConfig scfg;
  scfg.videos_train = 4;
  scfg.videos_val = 2;
  scfg.videos_test = 2;
  scfg.frames_per_video = 4;
  scfg.frames_sampled = 3;
  scfg.image_size = 48;
  scfg.seed = 515;
  auto ds = gen_dataset(scfg);
  PreprocessConfig pp;
  pp.resolution = 16;
  BackboneConfig bb;
  bb.stage_widths = {4, 6};
  bb.blocks_per_stage = {1, 1};
  bb.input_resolution = 16;
  const auto level = CompressionLevel::from_qp(23);
  auto train_p = prepare_dataset<double>(ds, Split::train, level, pp);
  auto val_p = prepare_dataset<double>(ds, Split::val, level, pp);

  TrainConfig<double> cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.base_lr = 1e-3;
  cfg.seed = 99;
  auto run = [&] {
    MultiStreamModel<double> model(bb, 55);
    return train(model, train_p, val_p, cfg);
  };
  const auto h1 = run();
  const auto h2 = run();
  bool identical = h1.epochs.size() == h2.epochs.size();
  for (std::size_t e = 0; identical && e < h1.epochs.size(); ++e) {
    identical = h1.epochs[e].train_loss.l_total ==
                    h2.epochs[e].train_loss.l_total &&
                h1.epochs[e].val_balanced_accuracy ==
                    h2.epochs[e].val_balanced_accuracy &&
                h1.epochs[e].train_loss.l_fusion ==
                    h2.epochs[e].train_loss.l_fusion;
  }

  // Checkpoint round trip, bit-exact probe outputs.
  bool roundtrip = true;
  {
    MultiStreamModel<float> model(bb, 77);
    auto fp = prepare_dataset<float>(ds, Split::val, level, pp);
    TrainConfig<float> fcfg;
    fcfg.epochs = 1;
    fcfg.batch_size = 8;
    fcfg.base_lr = 1e-3f;
    auto ft = prepare_dataset<float>(ds, Split::train, level, pp);
    train(model, ft, fp, fcfg);
    const std::string path = "/tmp/reenact_acceptance_ckpt.bin";
    save_checkpoint(model, path);
    auto loaded = load_checkpoint<float>(path);
    std::vector<std::int64_t> rows;
    for (std::int64_t i = 0; i < fp.count; ++i) rows.push_back(i);
    NoGradGuard ng;
    auto a = model.forward(assemble_batch(fp, rows), false);
    auto b = loaded.forward(assemble_batch(fp, rows), false);
    roundtrip = a.fused_logits.values() == b.fused_logits.values();
    for (int s = 0; s < 5; ++s)
      roundtrip = roundtrip && a.stream_logits[s].values() ==
                                   b.stream_logits[s].values();
    std::remove(path.c_str());
  }
  criterion("determinism-persistence", identical && roundtrip,
            std::string("f64 history ") +
                (identical ? "bit-identical" : "DIVERGED") +
                ", checkpoint probe " + (roundtrip ? "bit-exact" : "MISMATCH"));
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  check_gradient_suite();
  check_loss_identities();
  check_metric_oracles();
  check_desk_criteria();
  check_determinism_persistence();
  std::printf("%s (%d failure%s, %.1f s total)\n",
              g_failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED",
              g_failures, g_failures == 1 ? "" : "s", seconds_since(t0));
  return g_failures == 0 ? 0 : 1;
}
