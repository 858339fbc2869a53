// Command-line front end for the reenactment-detection toolkit: synthetic
// corpus generation, preprocessing, training, evaluation, ablations and
// class-activation-map rendering.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "reenact/checkpoint.hpp"
#include "reenact/eval.hpp"
#include "reenact/model.hpp"
#include "reenact/png_io.hpp"
#include "reenact/preprocess.hpp"
#include "reenact/synth.hpp"
#include "reenact/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace reenact;

namespace {

// Exit codes: 0 success, 1 usage/config error, 2 numerical failure.
constexpr int kExitConfig = 1;
constexpr int kExitNumeric = 2;

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file: " + path);
  json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw ConfigError("malformed config file " + path + ": " + e.what());
  }
  return j;
}

/// flag > config file > default.
template <class T>
T resolve(const CLI::Option* opt, const T& flag_value, const json& file,
          const std::string& section, const std::string& key, const T& def) {
  if (opt && opt->count() > 0) return flag_value;
  if (!section.empty() && file.contains(section) &&
      file[section].contains(key))
    return file[section][key].get<T>();
  if (section.empty() && file.contains(key)) return file[key].get<T>();
  return def;
}

void ensure_out_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory " + out + ": " +
                        ec.message());
}

/// Written before any real work so every output is reproducible from its
/// artifacts alone.
void write_run_config(const std::string& out, const std::string& command,
                      const json& resolved) {
  json j = resolved;
  j["command"] = command;
  std::ofstream f(fs::path(out) / "run_config.json");
  if (!f) throw IoError("cannot write run_config.json under " + out);
  f << j.dump(2) << "\n";
}

Dataset load_dataset(const std::string& data) {
  if (fs::is_directory(data)) {
    const fs::path manifest = fs::path(data) / "manifest.csv";
    if (fs::exists(manifest)) return load_manifest(manifest.string());
    return load_faceforensics_tree(data);
  }
  return load_manifest(data);
}

struct CommonModelArgs {
  std::string variant = "desk";
  int resolution = 0;  // 0 = variant default
  double margin = 1.0;

  BackboneConfig backbone() const {
    BackboneConfig bb =
        variant == "paper" ? BackboneConfig::paper() : BackboneConfig::desk();
    if (resolution > 0) bb.input_resolution = resolution;
    bb.validate();
    return bb;
  }
  PreprocessConfig preprocess(const BackboneConfig& bb) const {
    PreprocessConfig pp;
    pp.resolution = bb.input_resolution;
    pp.margin = margin;
    return pp;
  }
};

ImageU8 to_u8(const ImageF& img) {
  ImageU8 out(img.h, img.w, img.c);
  for (std::size_t i = 0; i < img.px.size(); ++i)
    out.px[i] = clamp_u8(255.0 * img.px[i]);
  return out;
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string out, config;
  int videos = 0, frames = 0, image_size = 0, sampled = 0;
  double strength = -1;
  std::uint64_t seed = 0;
  bool force = false;
  CLI::Option *videos_opt, *frames_opt, *size_opt, *sampled_opt, *strength_opt,
      *seed_opt;
};

int run_gen_data(const GenDataArgs& a) {
  const json file = load_config_file(a.config);
  SynthConfig cfg;
  if (file.contains("synth")) cfg = file["synth"].get<SynthConfig>();
  if (a.videos_opt->count() > 0) {
    const int n = a.videos;
    cfg.videos_train = static_cast<int>(std::lround(n * 0.70));
    cfg.videos_val = static_cast<int>(std::lround(n * 0.15));
    cfg.videos_test = n - cfg.videos_train - cfg.videos_val;
  }
  if (a.frames_opt->count() > 0) cfg.frames_per_video = a.frames;
  if (a.sampled_opt->count() > 0) cfg.frames_sampled = a.sampled;
  if (a.size_opt->count() > 0) cfg.image_size = a.image_size;
  if (a.strength_opt->count() > 0) cfg.artifact_strength = a.strength;
  if (a.seed_opt->count() > 0) cfg.seed = a.seed;

  if (fs::exists(a.out) && !fs::is_empty(a.out) && !a.force)
    throw ConfigError("output directory " + a.out +
                      " is not empty (use --force to write anyway)");
  ensure_out_dir(a.out);
  json resolved;
  resolved["synth"] = cfg;
  resolved["seed"] = cfg.seed;
  write_run_config(a.out, "gen-data", resolved);

  Dataset ds = gen_dataset(cfg);
  write_corpus(ds, cfg, a.out);
  std::cout << "gen-data: wrote " << ds.samples.size() << " samples ("
            << cfg.total_videos() << " videos) under " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// preprocess
// ---------------------------------------------------------------------------

struct PreprocessArgs {
  std::string data, out, split = "train";
  int qp = 0, limit = 8;
  CommonModelArgs model;
};

int run_preprocess(const PreprocessArgs& a) {
  ensure_out_dir(a.out);
  const auto bb = a.model.backbone();
  const auto pp = a.model.preprocess(bb);
  json resolved;
  resolved["data"] = a.data;
  resolved["qp"] = a.qp;
  resolved["split"] = a.split;
  resolved["resolution"] = pp.resolution;
  resolved["seed"] = 0;
  write_run_config(a.out, "preprocess", resolved);

  Dataset ds = load_dataset(a.data);
  const auto level = CompressionLevel::from_qp(a.qp);
  const auto idx = ds.split_indices(split_from_name(a.split));
  std::ofstream listing(fs::path(a.out) / "preprocessed.csv");
  listing << "video_id,frame_index,label,region,path\n";
  static const char* region_names[5] = {"x1", "x2", "x3", "x4", "x5"};
  int done = 0;
  for (auto i : idx) {
    if (a.limit > 0 && done >= a.limit) break;
    auto& s = ds.samples[i];
    Frame frame;
    frame.pixels = sample_image(s, ds.root);
    frame.video_id = s.video_id;
    frame.frame_index = s.frame_index;
    const RegionSet rs = make_region_set(frame, s.box, level, pp);
    for (int r = 0; r < 5; ++r) {
      std::ostringstream name;
      name << s.video_id << "_f" << s.frame_index << "_" << (s.label ? "alt" : "orig")
           << "_" << region_names[r] << ".png";
      write_png((fs::path(a.out) / name.str()).string(), to_u8(rs.regions[r]));
      listing << s.video_id << ',' << s.frame_index << ',' << s.label << ','
              << region_names[r] << ',' << name.str() << "\n";
    }
    ++done;
  }
  std::cout << "preprocess: wrote regions for " << done << " samples under "
            << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data, out, config, precision = "f32";
  int qp = 0, epochs = 0, batch = 0, decay_every = 0;
  double lr = 0, lambda = -1, decay_factor = 0;
  std::uint64_t seed = 0;
  bool fusion_only = false;
  CommonModelArgs model;
  CLI::Option *qp_opt, *epochs_opt, *batch_opt, *lr_opt, *lambda_opt,
      *decay_every_opt, *decay_factor_opt, *seed_opt;
};

template <class Real>
int run_train_typed(const TrainArgs& a, const json& file) {
  TrainConfig<Real> tc;
  tc.epochs = resolve(a.epochs_opt, a.epochs, file, "train", "epochs", 20);
  tc.batch_size = resolve(a.batch_opt, a.batch, file, "train", "batch_size", 32);
  tc.base_lr = static_cast<Real>(
      resolve(a.lr_opt, a.lr, file, "train", "base_lr", 1e-4));
  tc.decay_every =
      resolve(a.decay_every_opt, a.decay_every, file, "train", "decay_every", 10);
  tc.decay_factor = static_cast<Real>(resolve(
      a.decay_factor_opt, a.decay_factor, file, "train", "decay_factor", 10.0));
  tc.lambda = static_cast<Real>(
      resolve(a.lambda_opt, a.lambda, file, "train", "lambda", 1.0));
  tc.seed = resolve(a.seed_opt, a.seed, file, "", "seed", std::uint64_t{1});
  const int qp = resolve(a.qp_opt, a.qp, file, "train", "qp", 0);
  tc.level = CompressionLevel::from_qp(qp);
  tc.fusion_only = a.fusion_only;
  tc.validate();

  const auto bb = a.model.backbone();
  const auto pp = a.model.preprocess(bb);

  json resolved;
  resolved["data"] = a.data;
  resolved["precision"] = a.precision;
  resolved["qp"] = qp;
  resolved["seed"] = tc.seed;
  resolved["fusion_only"] = tc.fusion_only;
  resolved["train"] = {{"epochs", tc.epochs},
                       {"batch_size", tc.batch_size},
                       {"base_lr", static_cast<double>(tc.base_lr)},
                       {"decay_every", tc.decay_every},
                       {"decay_factor", static_cast<double>(tc.decay_factor)},
                       {"lambda", static_cast<double>(tc.lambda)}};
  detail::backbone_to_json(resolved["backbone"], bb);
  write_run_config(a.out, "train", resolved);

  Dataset ds = load_dataset(a.data);
  std::cout << "preparing data at qp " << qp << " ...\n";
  auto train_p = prepare_dataset<Real>(ds, Split::train, tc.level, pp);
  auto val_p = prepare_dataset<Real>(ds, Split::val, tc.level, pp);
  std::cout << "train " << train_p.count << " samples, val " << val_p.count
            << " samples\n";

  MultiStreamModel<Real> model(bb, tc.seed);
  std::cout << "model parameters: " << model.param_count() << "\n";
  const auto history = train(model, train_p, val_p, tc, &std::cout);

  save_checkpoint(model, (fs::path(a.out) / "checkpoint.bin").string());
  write_history_csv(history, (fs::path(a.out) / "history.csv").string());
  std::cout << "best epoch " << history.best_epoch << " val balanced accuracy "
            << history.best_val_accuracy << "\n";
  return 0;
}

int run_train(const TrainArgs& a) {
  ensure_out_dir(a.out);
  const json file = load_config_file(a.config);
  if (a.precision == "f64") return run_train_typed<double>(a, file);
  if (a.precision == "f32") return run_train_typed<float>(a, file);
  throw ConfigError("unknown precision '" + a.precision + "' (use f32 or f64)");
}

// ---------------------------------------------------------------------------
// eval / roc
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint, data, out, split = "test";
  int qp = 0;
  CommonModelArgs model;
};

int run_eval(const EvalArgs& a, bool roc_only) {
  ensure_out_dir(a.out);
  json resolved;
  resolved["checkpoint"] = a.checkpoint;
  resolved["data"] = a.data;
  resolved["qp"] = a.qp;
  resolved["split"] = a.split;
  resolved["seed"] = 0;
  write_run_config(a.out, roc_only ? "roc" : "eval", resolved);

  auto model = load_checkpoint<float>(a.checkpoint);
  PreprocessConfig pp;
  pp.resolution = model.config().input_resolution;
  pp.margin = a.model.margin;
  Dataset ds = load_dataset(a.data);
  auto data = prepare_dataset<float>(ds, split_from_name(a.split),
                                     CompressionLevel::from_qp(a.qp), pp);
  const auto report = evaluate(model, data);
  write_roc_csv(report.roc, (fs::path(a.out) / "roc.csv").string());
  if (!roc_only)
    write_eval_csv(report, (fs::path(a.out) / "metrics.csv").string());
  std::cout << (roc_only ? "roc" : "eval") << ": balanced_accuracy "
            << report.balanced_accuracy << " auc " << report.auc_value << " (n="
            << report.n << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// cross-eval
// ---------------------------------------------------------------------------

struct CrossEvalArgs {
  std::vector<std::string> checkpoints;
  std::vector<int> qps{0, 23, 40};
  std::string data, out, split = "test";
  CommonModelArgs model;
};

int run_cross_eval(const CrossEvalArgs& a) {
  if (a.checkpoints.size() != 3 || a.qps.size() != 3)
    throw ConfigError("cross-eval needs exactly three checkpoints and three qps");
  ensure_out_dir(a.out);
  json resolved;
  resolved["checkpoints"] = a.checkpoints;
  resolved["qps"] = a.qps;
  resolved["data"] = a.data;
  resolved["split"] = a.split;
  resolved["seed"] = 0;
  write_run_config(a.out, "cross-eval", resolved);

  std::array<MultiStreamModel<float>, 3> models;
  for (int i = 0; i < 3; ++i)
    models[i] = load_checkpoint<float>(a.checkpoints[i]);
  PreprocessConfig pp;
  pp.resolution = models[0].config().input_resolution;
  pp.margin = a.model.margin;

  Dataset ds = load_dataset(a.data);
  std::array<PreparedData<float>, 3> tests;
  std::array<std::string, 3> names;
  for (int i = 0; i < 3; ++i) {
    const auto level = CompressionLevel::from_qp(a.qps[i]);
    tests[i] = prepare_dataset<float>(ds, split_from_name(a.split), level, pp);
    names[i] = level.name;
  }
  const auto m = cross_compression_matrix(models, tests);
  write_matrix_csv(m, names, (fs::path(a.out) / "cross_compression.csv").string());
  for (int r = 0; r < 3; ++r)
    std::cout << "train " << names[r] << ": " << m[r][0] << " " << m[r][1]
              << " " << m[r][2] << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// ablate / fusion-ablate
// ---------------------------------------------------------------------------

struct AblateArgs {
  std::string checkpoint, data, out, split = "test";
  int qp = 0;
  CommonModelArgs model;
};

int run_ablate(const AblateArgs& a, bool fusion_mode) {
  ensure_out_dir(a.out);
  json resolved;
  resolved["checkpoint"] = a.checkpoint;
  resolved["data"] = a.data;
  resolved["qp"] = a.qp;
  resolved["split"] = a.split;
  resolved["seed"] = 0;
  write_run_config(a.out, fusion_mode ? "fusion-ablate" : "ablate", resolved);

  auto model = load_checkpoint<float>(a.checkpoint);
  PreprocessConfig pp;
  pp.resolution = model.config().input_resolution;
  pp.margin = a.model.margin;
  Dataset ds = load_dataset(a.data);
  const auto level = CompressionLevel::from_qp(a.qp);
  auto train_p = prepare_dataset<float>(ds, Split::train, level, pp);
  auto eval_p = prepare_dataset<float>(ds, split_from_name(a.split), level, pp);

  if (fusion_mode) {
    const auto res = fusion_ablation(model, train_p, eval_p);
    write_fusion_ablation_csv(
        res, (fs::path(a.out) / "fusion_ablation.csv").string());
    for (const auto& r : res.rows)
      std::cout << r.classifiers << " + " << r.fusion << ": "
                << r.balanced_accuracy << "\n";
    if (!res.degenerate_columns.empty()) {
      std::cout << "degenerate score columns:";
      for (int c : res.degenerate_columns) std::cout << ' ' << c;
      std::cout << "\n";
    }
  } else {
    const auto rows = ablate_streams(model, train_p, eval_p);
    write_ablation_csv(rows, (fs::path(a.out) / "ablation.csv").string());
    for (const auto& r : rows)
      std::cout << r.name << ": " << r.balanced_accuracy << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// cam
// ---------------------------------------------------------------------------

struct CamArgs {
  std::string checkpoint, data, out, split = "test";
  int qp = 0, stream = 1, cls = 1, count = 8;
  CommonModelArgs model;
};

int run_cam(const CamArgs& a) {
  if (a.stream < 1 || a.stream > 5)
    throw ConfigError("cam: --stream must be in 1..5");
  if (a.cls != 0 && a.cls != 1) throw ConfigError("cam: --class must be 0 or 1");
  ensure_out_dir(a.out);
  json resolved;
  resolved["checkpoint"] = a.checkpoint;
  resolved["data"] = a.data;
  resolved["qp"] = a.qp;
  resolved["stream"] = a.stream;
  resolved["class"] = a.cls;
  resolved["split"] = a.split;
  resolved["seed"] = 0;
  write_run_config(a.out, "cam", resolved);

  auto model = load_checkpoint<float>(a.checkpoint);
  PreprocessConfig pp;
  pp.resolution = model.config().input_resolution;
  pp.margin = a.model.margin;
  Dataset ds = load_dataset(a.data);
  const auto level = CompressionLevel::from_qp(a.qp);
  const auto idx = ds.split_indices(split_from_name(a.split));

  std::ofstream summary(fs::path(a.out) / "cam_summary.csv");
  summary << "video_id,frame_index,stream,class,in_out_ratio,overlay\n";
  summary << std::setprecision(10);
  int done = 0;
  for (auto i : idx) {
    if (done >= a.count) break;
    auto& s = ds.samples[i];
    if (s.label != 1) continue;
    Frame frame;
    frame.pixels = sample_image(s, ds.root);
    frame.video_id = s.video_id;
    frame.frame_index = s.frame_index;
    const RegionSet rs = make_region_set(frame, s.box, level, pp);
    const auto heat = cam(model, rs, a.stream, a.cls);

    double ratio = std::numeric_limits<double>::quiet_NaN();
    if (!s.mask_path.empty() || !s.mask.empty()) {
      const ImageU8 mask = sample_mask(s, ds.root);
      const auto m =
          mask_at_model_resolution(mask, s.box, pp.margin, pp.resolution);
      ratio = cam_region_ratio(heat, m);
    }
    std::ostringstream name;
    name << s.video_id << "_f" << s.frame_index << "_s" << a.stream << "_c"
         << a.cls << ".png";
    write_png((fs::path(a.out) / name.str()).string(), heat.overlay);
    summary << s.video_id << ',' << s.frame_index << ',' << a.stream << ','
            << a.cls << ',' << ratio << ',' << name.str() << "\n";
    ++done;
  }
  std::cout << "cam: wrote " << done << " overlays under " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// lambda-sweep
// ---------------------------------------------------------------------------

struct SweepArgs {
  std::string data, out, config;
  std::vector<double> lambdas{0.001, 1.0, 100.0};
  int qp = 0, epochs = 0, batch = 0;
  double lr = 0;
  std::uint64_t seed = 0;
  CommonModelArgs model;
  CLI::Option *epochs_opt, *batch_opt, *lr_opt, *seed_opt, *qp_opt;
};

int run_lambda_sweep(const SweepArgs& a) {
  if (a.lambdas.empty()) throw ConfigError("lambda-sweep: need at least one lambda");
  ensure_out_dir(a.out);
  const json file = load_config_file(a.config);
  TrainConfig<float> tc;
  tc.epochs = resolve(a.epochs_opt, a.epochs, file, "train", "epochs", 10);
  tc.batch_size = resolve(a.batch_opt, a.batch, file, "train", "batch_size", 32);
  tc.base_lr =
      static_cast<float>(resolve(a.lr_opt, a.lr, file, "train", "base_lr", 1e-4));
  tc.seed = resolve(a.seed_opt, a.seed, file, "", "seed", std::uint64_t{1});
  const int qp = resolve(a.qp_opt, a.qp, file, "train", "qp", 40);
  tc.level = CompressionLevel::from_qp(qp);
  tc.validate();

  const auto bb = a.model.backbone();
  const auto pp = a.model.preprocess(bb);
  json resolved;
  resolved["data"] = a.data;
  resolved["lambdas"] = a.lambdas;
  resolved["qp"] = qp;
  resolved["seed"] = tc.seed;
  resolved["epochs"] = tc.epochs;
  write_run_config(a.out, "lambda-sweep", resolved);

  Dataset ds = load_dataset(a.data);
  auto train_p = prepare_dataset<float>(ds, Split::train, tc.level, pp);
  auto val_p = prepare_dataset<float>(ds, Split::val, tc.level, pp);
  auto test_p = prepare_dataset<float>(ds, Split::test, tc.level, pp);

  const auto rows =
      lambda_sweep(bb, train_p, val_p, test_p, tc, a.lambdas, &std::cout);
  write_lambda_csv(rows, (fs::path(a.out) / "lambda_sweep.csv").string());
  for (const auto& r : rows)
    std::cout << "lambda " << r.lambda << ": " << r.balanced_accuracy << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-stream facial-reenactment detector (desk-scale toolkit)"};
  app.require_subcommand(1);

  int threads = 0;
  app.add_option("--threads", threads,
                 "Cap worker threads (same as REENACT_THREADS)");

  // gen-data
  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus");
  gen->add_option("--out", gd.out, "Output directory")->required();
  gen->add_option("--config", gd.config, "JSON config file");
  gd.videos_opt = gen->add_option("--videos", gd.videos,
                                  "Total videos (split 70:15:15)");
  gd.frames_opt = gen->add_option("--frames", gd.frames, "Frames per video");
  gd.sampled_opt =
      gen->add_option("--sampled", gd.sampled, "Frames sampled per sequence");
  gd.size_opt = gen->add_option("--image-size", gd.image_size, "Frame size");
  gd.strength_opt =
      gen->add_option("--strength", gd.strength, "Artifact strength");
  gd.seed_opt = gen->add_option("--seed", gd.seed, "RNG seed");
  gen->add_flag("--force", gd.force, "Write into a non-empty directory");

  // preprocess
  PreprocessArgs pa;
  auto* pre = app.add_subcommand("preprocess",
                                 "Write model-ready region images for inspection");
  pre->add_option("--data", pa.data, "Manifest or dataset directory")->required();
  pre->add_option("--out", pa.out, "Output directory")->required();
  pre->add_option("--qp", pa.qp, "Compression qp");
  pre->add_option("--split", pa.split, "Split to preprocess");
  pre->add_option("--limit", pa.limit, "Max samples (0 = all)");
  pre->add_option("--variant", pa.model.variant, "Backbone variant");
  pre->add_option("--resolution", pa.model.resolution, "Model resolution");
  pre->add_option("--margin", pa.model.margin, "Crop margin");

  // train
  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train the five-stream model");
  tr->add_option("--data", ta.data, "Manifest or dataset directory")->required();
  tr->add_option("--out", ta.out, "Output directory")->required();
  tr->add_option("--config", ta.config, "JSON config file");
  ta.qp_opt = tr->add_option("--qp", ta.qp, "Training compression qp");
  ta.epochs_opt = tr->add_option("--epochs", ta.epochs, "Epochs");
  ta.batch_opt = tr->add_option("--batch", ta.batch, "Batch size");
  ta.lr_opt = tr->add_option("--lr", ta.lr, "Base learning rate");
  ta.lambda_opt = tr->add_option("--lambda", ta.lambda, "Fusion loss weight");
  ta.decay_every_opt =
      tr->add_option("--decay-every", ta.decay_every, "Epochs per lr decay");
  ta.decay_factor_opt =
      tr->add_option("--decay-factor", ta.decay_factor, "Lr decay factor");
  ta.seed_opt = tr->add_option("--seed", ta.seed, "RNG seed");
  tr->add_option("--precision", ta.precision, "f32 or f64");
  tr->add_flag("--fusion-only", ta.fusion_only,
               "Train with the fusion loss only (ablation)");
  tr->add_option("--variant", ta.model.variant, "Backbone variant (desk|paper)");
  tr->add_option("--resolution", ta.model.resolution, "Model resolution");
  tr->add_option("--margin", ta.model.margin, "Crop margin");

  // eval / roc
  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  auto* roc = app.add_subcommand("roc", "Write the ROC curve for a checkpoint");
  for (auto* cmd : {ev, roc}) {
    cmd->add_option("--checkpoint", ea.checkpoint, "Checkpoint file")->required();
    cmd->add_option("--data", ea.data, "Manifest or dataset directory")->required();
    cmd->add_option("--out", ea.out, "Output directory")->required();
    cmd->add_option("--split", ea.split, "Split to evaluate");
    cmd->add_option("--qp", ea.qp, "Compression qp");
    cmd->add_option("--margin", ea.model.margin, "Crop margin");
  }

  // cross-eval
  CrossEvalArgs ca;
  auto* cr = app.add_subcommand("cross-eval",
                                "3x3 cross-compression accuracy matrix");
  cr->add_option("--checkpoints", ca.checkpoints,
                 "Three checkpoints (train levels)")
      ->required()
      ->expected(3);
  cr->add_option("--qps", ca.qps, "Three test qps")->expected(3);
  cr->add_option("--data", ca.data, "Manifest or dataset directory")->required();
  cr->add_option("--out", ca.out, "Output directory")->required();
  cr->add_option("--split", ca.split, "Split to evaluate");
  cr->add_option("--margin", ca.model.margin, "Crop margin");

  // ablate / fusion-ablate
  AblateArgs aa;
  auto* ab = app.add_subcommand("ablate", "Per-stream and pairwise ablations");
  auto* fab = app.add_subcommand("fusion-ablate",
                                 "Frozen-score fusion vs end-to-end fusion");
  for (auto* cmd : {ab, fab}) {
    cmd->add_option("--checkpoint", aa.checkpoint, "Checkpoint file")->required();
    cmd->add_option("--data", aa.data, "Manifest or dataset directory")->required();
    cmd->add_option("--out", aa.out, "Output directory")->required();
    cmd->add_option("--split", aa.split, "Split to evaluate");
    cmd->add_option("--qp", aa.qp, "Compression qp");
    cmd->add_option("--margin", aa.model.margin, "Crop margin");
  }

  // cam
  CamArgs cma;
  auto* cm = app.add_subcommand("cam", "Class activation map overlays");
  cm->add_option("--checkpoint", cma.checkpoint, "Checkpoint file")->required();
  cm->add_option("--data", cma.data, "Manifest or dataset directory")->required();
  cm->add_option("--out", cma.out, "Output directory")->required();
  cm->add_option("--stream", cma.stream, "Stream index 1..5");
  cm->add_option("--class", cma.cls, "Class index 0|1");
  cm->add_option("--count", cma.count, "Number of altered samples");
  cm->add_option("--split", cma.split, "Split to draw from");
  cm->add_option("--qp", cma.qp, "Compression qp");
  cm->add_option("--margin", cma.model.margin, "Crop margin");

  // lambda-sweep
  SweepArgs sa;
  auto* sw = app.add_subcommand("lambda-sweep",
                                "Train per lambda and report test accuracy");
  sw->add_option("--data", sa.data, "Manifest or dataset directory")->required();
  sw->add_option("--out", sa.out, "Output directory")->required();
  sw->add_option("--config", sa.config, "JSON config file");
  sw->add_option("--lambdas", sa.lambdas, "Lambda values");
  sa.qp_opt = sw->add_option("--qp", sa.qp, "Compression qp");
  sa.epochs_opt = sw->add_option("--epochs", sa.epochs, "Epochs per run");
  sa.batch_opt = sw->add_option("--batch", sa.batch, "Batch size");
  sa.lr_opt = sw->add_option("--lr", sa.lr, "Base learning rate");
  sa.seed_opt = sw->add_option("--seed", sa.seed, "Shared RNG seed");
  sw->add_option("--variant", sa.model.variant, "Backbone variant");
  sw->add_option("--resolution", sa.model.resolution, "Model resolution");
  sw->add_option("--margin", sa.model.margin, "Crop margin");

  CLI11_PARSE(app, argc, argv);

  if (threads > 0)
    setenv("REENACT_THREADS", std::to_string(threads).c_str(), 1);

  try {
    if (*gen) return run_gen_data(gd);
    if (*pre) return run_preprocess(pa);
    if (*tr) return run_train(ta);
    if (*ev) return run_eval(ea, false);
    if (*roc) return run_eval(ea, true);
    if (*cr) return run_cross_eval(ca);
    if (*ab) return run_ablate(aa, false);
    if (*fab) return run_ablate(aa, true);
    if (*cm) return run_cam(cma);
    if (*sw) return run_lambda_sweep(sa);
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return 0;
}
