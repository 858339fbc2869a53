#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reenact/errors.hpp"
#include "reenact/image.hpp"
#include "reenact/png_io.hpp"
#include "reenact/preprocess.hpp"
#include "reenact/rng.hpp"

namespace reenact {

enum class Split { train, val, test };

inline std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    default: return "test";
  }
}

inline Split split_from_name(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val" || s == "validation") return Split::val;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split name: " + s);
}

/// One labeled frame. Pixels may live in memory (generated) or behind
/// image_path (loaded from a manifest).
struct LabeledSample {
  std::string video_id;
  int frame_index = 0;
  std::string image_path;
  std::string mask_path;
  ImageU8 image;
  ImageU8 mask;  // artifact-region mask, altered samples only
  int label = 0;  // 0 original, 1 altered
  FaceBox box;
  Split split = Split::train;
};

struct Dataset {
  std::string root;
  std::vector<LabeledSample> samples;

  std::vector<std::size_t> split_indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (samples[i].split == s) out.push_back(i);
    return out;
  }
};

/// Pixels for a sample, reading them from disk on first use.
inline const ImageU8& sample_image(LabeledSample& s, const std::string& root) {
  if (s.image.empty()) {
    const std::filesystem::path p = std::filesystem::path(root) / s.image_path;
    s.image = read_png(p.string());
  }
  return s.image;
}

inline ImageU8 sample_mask(const LabeledSample& s, const std::string& root) {
  if (!s.mask.empty()) return s.mask;
  if (s.mask_path.empty())
    throw IoError("sample has no artifact mask: " + s.video_id + " frame " +
                  std::to_string(s.frame_index));
  const std::filesystem::path p = std::filesystem::path(root) / s.mask_path;
  return read_png(p.string());
}

struct SynthConfig {
  int videos_train = 70;
  int videos_val = 15;
  int videos_test = 15;
  int frames_per_video = 16;  // rendered sequence length
  int frames_sampled = 10;    // frames drawn per sequence
  int image_size = 128;
  double artifact_strength = 1.0;
  std::vector<std::string> artifact_regions = {"mouth", "nose", "face-boundary",
                                               "eyes"};
  std::uint64_t seed = 1234;

  int total_videos() const { return videos_train + videos_val + videos_test; }
  bool has_region(const std::string& r) const {
    return std::find(artifact_regions.begin(), artifact_regions.end(), r) !=
           artifact_regions.end();
  }
};

inline void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = nlohmann::json{{"videos_train", c.videos_train},
                     {"videos_val", c.videos_val},
                     {"videos_test", c.videos_test},
                     {"frames_per_video", c.frames_per_video},
                     {"frames_sampled", c.frames_sampled},
                     {"image_size", c.image_size},
                     {"artifact_strength", c.artifact_strength},
                     {"artifact_regions", c.artifact_regions},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, SynthConfig& c) {
  c.videos_train = j.value("videos_train", c.videos_train);
  c.videos_val = j.value("videos_val", c.videos_val);
  c.videos_test = j.value("videos_test", c.videos_test);
  c.frames_per_video = j.value("frames_per_video", c.frames_per_video);
  c.frames_sampled = j.value("frames_sampled", c.frames_sampled);
  c.image_size = j.value("image_size", c.image_size);
  c.artifact_strength = j.value("artifact_strength", c.artifact_strength);
  if (j.contains("artifact_regions"))
    c.artifact_regions = j.at("artifact_regions").get<std::vector<std::string>>();
  c.seed = j.value("seed", c.seed);
}

// ---------------------------------------------------------------------------
// procedural face rendering
// ---------------------------------------------------------------------------

namespace detail {

struct Ellipse {
  double cx, cy, rx, ry;

  double dist(double x, double y) const {
    const double dx = (x - cx) / rx;
    const double dy = (y - cy) / ry;
    return std::sqrt(dx * dx + dy * dy);
  }
  /// Soft coverage: 1 inside, 0 outside, ~1.5 px transition at the rim.
  double alpha(double x, double y) const {
    const double soft = 1.5 / std::min(rx, ry);
    return std::clamp((1.0 - dist(x, y)) / soft, 0.0, 1.0);
  }
};

struct VideoParams {
  std::array<double, 3> bg_base, bg_gx, bg_gy;
  struct Blob {
    double x, y, r;
    std::array<double, 3> col;
  };
  std::vector<Blob> blobs;
  double noise_amp;

  double cx0, cy0, a, b;
  double move_ax, move_ay, move_tx, move_ty, move_px, move_py;
  std::array<double, 3> skin;
  double eye_dx, eye_dy, eye_rx, eye_ry;
  std::array<double, 3> iris;
  double nose_dy, nose_rx, nose_ry;
  double mouth_dy, mouth_rx, mouth_ry0, mouth_amp, mouth_t, mouth_p;
  std::array<double, 3> lip;
};

inline VideoParams sample_video_params(Rng rng, int w, int h) {
  VideoParams p;
  for (int c = 0; c < 3; ++c) {
    p.bg_base[c] = rng.uniform(40, 110);
    p.bg_gx[c] = rng.uniform(-30, 30);
    p.bg_gy[c] = rng.uniform(-30, 30);
  }
  const int n_blobs = 3 + static_cast<int>(rng.uniform_int(3));
  for (int i = 0; i < n_blobs; ++i) {
    VideoParams::Blob bl;
    bl.x = rng.uniform(0, w);
    bl.y = rng.uniform(0, h);
    bl.r = rng.uniform(10, 36);
    for (int c = 0; c < 3; ++c) bl.col[c] = rng.uniform(-28, 28);
    p.blobs.push_back(bl);
  }
  p.noise_amp = rng.uniform(2, 5);

  p.cx0 = w / 2.0 + rng.uniform(-6, 6);
  p.cy0 = h / 2.0 + rng.uniform(-5, 5);
  p.a = w * rng.uniform(0.21, 0.26);
  p.b = h * rng.uniform(0.27, 0.33);
  p.move_ax = rng.uniform(2, 5);
  p.move_ay = rng.uniform(1.5, 4);
  p.move_tx = rng.uniform(8, 20);
  p.move_ty = rng.uniform(8, 20);
  p.move_px = rng.uniform(0, 6.28318530717958648);
  p.move_py = rng.uniform(0, 6.28318530717958648);

  p.skin[0] = rng.uniform(165, 205);
  p.skin[1] = p.skin[0] - rng.uniform(25, 55);
  p.skin[2] = p.skin[1] - rng.uniform(15, 40);

  p.eye_dx = p.a * rng.uniform(0.36, 0.44);
  p.eye_dy = -p.b * rng.uniform(0.26, 0.34);
  p.eye_rx = p.a * rng.uniform(0.13, 0.18);
  p.eye_ry = p.b * rng.uniform(0.07, 0.10);
  for (int c = 0; c < 3; ++c) p.iris[c] = rng.uniform(25, 70);

  p.nose_dy = p.b * rng.uniform(0.02, 0.10);
  p.nose_rx = p.a * rng.uniform(0.08, 0.12);
  p.nose_ry = p.b * rng.uniform(0.14, 0.20);

  p.mouth_dy = p.b * rng.uniform(0.42, 0.50);
  p.mouth_rx = p.a * rng.uniform(0.30, 0.40);
  p.mouth_ry0 = p.b * rng.uniform(0.07, 0.10);
  p.mouth_amp = rng.uniform(0.15, 0.35);
  p.mouth_t = rng.uniform(6, 14);
  p.mouth_p = rng.uniform(0, 6.28318530717958648);
  p.lip[0] = rng.uniform(110, 140);
  p.lip[1] = rng.uniform(45, 65);
  p.lip[2] = rng.uniform(50, 70);
  return p;
}

struct FaceGeometry {
  Ellipse face, eye_l, eye_r, nose, mouth;
};

inline FaceGeometry geometry_at(const VideoParams& p, int t) {
  const double cx =
      p.cx0 + p.move_ax * std::sin(6.28318530717958648 * t / p.move_tx + p.move_px);
  const double cy =
      p.cy0 + p.move_ay * std::sin(6.28318530717958648 * t / p.move_ty + p.move_py);
  const double mouth_ry =
      p.mouth_ry0 *
      (1.0 + p.mouth_amp * std::sin(6.28318530717958648 * t / p.mouth_t + p.mouth_p));
  FaceGeometry g;
  g.face = {cx, cy, p.a, p.b};
  g.eye_l = {cx - p.eye_dx, cy + p.eye_dy, p.eye_rx, p.eye_ry};
  g.eye_r = {cx + p.eye_dx, cy + p.eye_dy, p.eye_rx, p.eye_ry};
  g.nose = {cx, cy + p.nose_dy, p.nose_rx, p.nose_ry};
  g.mouth = {cx, cy + p.mouth_dy, p.mouth_rx, mouth_ry};
  return g;
}

inline ImageU8 render_frame(const VideoParams& p, const FaceGeometry& g, int w,
                            int h, Rng noise_rng) {
  ImageU8 img(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double col[3];
      for (int c = 0; c < 3; ++c)
        col[c] = p.bg_base[c] + p.bg_gx[c] * (x / double(w) - 0.5) +
                 p.bg_gy[c] * (y / double(h) - 0.5);
      for (const auto& bl : p.blobs) {
        const double dx = x - bl.x, dy = y - bl.y;
        const double d2 = (dx * dx + dy * dy) / (bl.r * bl.r);
        if (d2 < 1.0)
          for (int c = 0; c < 3; ++c) col[c] += bl.col[c] * (1.0 - d2);
      }
      const double af = g.face.alpha(x, y);
      if (af > 0) {
        const double d = g.face.dist(x, y);
        const double shade = 1.0 - 0.15 * d * d;
        for (int c = 0; c < 3; ++c)
          col[c] = (1 - af) * col[c] + af * p.skin[c] * shade;
        auto feature = [&](const Ellipse& e, const std::array<double, 3>& fc) {
          const double a = e.alpha(x, y);
          if (a > 0)
            for (int c = 0; c < 3; ++c) col[c] = (1 - a) * col[c] + a * fc[c];
        };
        feature(g.eye_l, p.iris);
        feature(g.eye_r, p.iris);
        std::array<double, 3> nose_col{p.skin[0] * 0.82, p.skin[1] * 0.82,
                                       p.skin[2] * 0.82};
        feature(g.nose, nose_col);
        feature(g.mouth, p.lip);
      }
      for (int c = 0; c < 3; ++c) {
        const double n = p.noise_amp * (noise_rng.uniform() * 2.0 - 1.0);
        img.at(y, x, c) = clamp_u8(col[c] + n);
      }
    }
  return img;
}

/// Artifact placement masks, in the spirit of where reenactment pipelines
/// leave traces: lower-face texture, the face outline, and the eye region.
struct ArtifactMasks {
  Ellipse mouth, nose, eye_l, eye_r;
  Ellipse face;
  double ring_halfwidth_px;

  bool in_ring(double x, double y) const {
    const double d = face.dist(x, y);
    const double px_scale = std::min(face.rx, face.ry);
    return std::abs(d - 1.0) * px_scale <= ring_halfwidth_px;
  }
};

inline ArtifactMasks artifact_masks(const FaceGeometry& g) {
  ArtifactMasks m;
  m.mouth = {g.mouth.cx, g.mouth.cy, g.mouth.rx * 1.45,
             std::max(g.mouth.ry * 2.4, 5.0)};
  m.nose = {g.nose.cx, g.nose.cy, g.nose.rx * 2.0, g.nose.ry * 1.5};
  m.eye_l = {g.eye_l.cx, g.eye_l.cy, g.eye_l.rx * 1.5, g.eye_l.ry * 2.1};
  m.eye_r = {g.eye_r.cx, g.eye_r.cy, g.eye_r.rx * 1.5, g.eye_r.ry * 2.1};
  m.face = g.face;
  m.ring_halfwidth_px = std::max(2.5, 0.06 * std::min(g.face.rx, g.face.ry));
  return m;
}

inline ImageU8 render_mask(const ArtifactMasks& m, const SynthConfig& cfg, int w,
                           int h) {
  ImageU8 mask(h, w, 1, 0);
  const bool mouth = cfg.has_region("mouth");
  const bool nose = cfg.has_region("nose");
  const bool ring = cfg.has_region("face-boundary");
  const bool eyes = cfg.has_region("eyes");
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      bool inside = false;
      if (mouth && m.mouth.dist(x, y) <= 1.0) inside = true;
      if (!inside && nose && m.nose.dist(x, y) <= 1.0) inside = true;
      if (!inside && eyes &&
          (m.eye_l.dist(x, y) <= 1.0 || m.eye_r.dist(x, y) <= 1.0))
        inside = true;
      if (!inside && ring && m.in_ring(x, y)) inside = true;
      if (inside) mask.at(y, x, 0) = 255;
    }
  return mask;
}

/// Adds the alteration traces in place: high-frequency speckle over the
/// mouth/nose (and optionally eye) regions plus ringing along the face
/// outline, all linear in strength. The speckle amplitude rides a smooth
/// low-frequency field, so heavy requantization wipes most of it but leaves
/// the strong patches detectable (the compression-robustness testbed).
inline void inject_artifacts(ImageU8& img, const ArtifactMasks& m,
                             const SynthConfig& cfg, Rng art_rng) {
  constexpr double kAmpMouthNose = 20.0;
  constexpr double kAmpEyes = 15.0;
  constexpr double kAmpRing = 12.0;
  constexpr double kRingWavelengthPx = 3.5;
  constexpr double kFieldPeriodPx = 13.0;
  const double s = cfg.artifact_strength;
  const bool mouth = cfg.has_region("mouth");
  const bool nose = cfg.has_region("nose");
  const bool ring = cfg.has_region("face-boundary");
  const bool eyes = cfg.has_region("eyes");
  const double px_scale = std::min(m.face.rx, m.face.ry);

  const double phase_x = art_rng.uniform(0, 6.28318530717958648);
  const double phase_y = art_rng.uniform(0, 6.28318530717958648);
  auto amplitude_field = [&](int x, int y) {
    const double gx =
        std::sin(6.28318530717958648 * x / kFieldPeriodPx + phase_x);
    const double gy =
        std::sin(6.28318530717958648 * y / kFieldPeriodPx + phase_y);
    const double t = 0.5 + 0.5 * gx * gy;  // in [0,1]
    return 0.4 + 1.8 * t * t;              // in [0.4, 2.2]
  };

  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      double delta = 0.0;
      const double checker = ((x + y) & 1) ? 1.0 : -1.0;
      const bool in_mouth = mouth && m.mouth.dist(x, y) <= 1.0;
      const bool in_nose = nose && m.nose.dist(x, y) <= 1.0;
      if (in_mouth || in_nose)
        delta += s * kAmpMouthNose * amplitude_field(x, y) * checker *
                 art_rng.uniform(0.6, 1.3);
      if (eyes && (m.eye_l.dist(x, y) <= 1.0 || m.eye_r.dist(x, y) <= 1.0))
        delta += s * kAmpEyes * amplitude_field(x, y) * checker *
                 art_rng.uniform(0.6, 1.3);
      if (ring && m.in_ring(x, y)) {
        const double r_px = (m.face.dist(x, y) - 1.0) * px_scale;
        delta += s * kAmpRing *
                 std::cos(6.28318530717958648 * r_px / kRingWavelengthPx) *
                 art_rng.uniform(0.7, 1.2);
      }
      if (delta != 0.0)
        for (int c = 0; c < 3; ++c)
          img.at(y, x, c) = clamp_u8(img.at(y, x, c) + delta);
    }
}

inline std::string video_name(int index) {
  std::ostringstream os;
  os << "vid" << std::setw(4) << std::setfill('0') << index;
  return os.str();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// generation
// ---------------------------------------------------------------------------

/// Face bounding box published with each sample (annotation-style source).
inline FaceBox face_box_of(const detail::FaceGeometry& g) {
  FaceBox box;
  box.cx = g.face.cx;
  box.cy = g.face.cy;
  box.w = 2.0 * g.face.rx * 1.05;
  box.h = 2.0 * g.face.ry * 1.05;
  box.source = BoxSource::annotation;
  return box;
}

/// Renders the full frame sequence for one video. label==1 injects the
/// alteration traces; the underlying scene is identical for both labels.
inline std::vector<LabeledSample> gen_video(const SynthConfig& cfg,
                                            int video_index, int label) {
  if (label != 0 && label != 1)
    throw std::invalid_argument("gen_video: label must be 0 or 1");
  const int w = cfg.image_size, h = cfg.image_size;
  const Rng root(cfg.seed);
  const Rng video_rng = root.fork("video").fork(video_index);
  const auto params = detail::sample_video_params(video_rng.fork("params"), w, h);
  const std::string vid = detail::video_name(video_index);

  std::vector<LabeledSample> out;
  out.reserve(cfg.frames_per_video);
  for (int t = 0; t < cfg.frames_per_video; ++t) {
    const auto geom = detail::geometry_at(params, t);
    ImageU8 img = detail::render_frame(params, geom, w, h,
                                       video_rng.fork("noise").fork(t));
    const auto masks = detail::artifact_masks(geom);
    LabeledSample s;
    if (label == 1) {
      detail::inject_artifacts(img, masks, cfg,
                               video_rng.fork("artifact").fork(t));
      s.mask = detail::render_mask(masks, cfg, w, h);
    }
    s.video_id = vid;
    s.frame_index = t;
    s.image = std::move(img);
    s.label = label;
    s.box = face_box_of(geom);
    out.push_back(std::move(s));
  }
  return out;
}

/// Full corpus: per video one original and one altered sequence with
/// frames_sampled frames drawn from each; splits are disjoint by video.
inline Dataset gen_dataset(const SynthConfig& cfg) {
  Dataset ds;
  const Rng root(cfg.seed);
  int index = 0;
  auto emit_split = [&](Split split, int count) {
    for (int v = 0; v < count; ++v, ++index) {
      for (int label = 0; label < 2; ++label) {
        auto seq = gen_video(cfg, index, label);
        const auto pick = sample_frame_indices(
            seq.size(), static_cast<std::size_t>(cfg.frames_sampled),
            root.fork(label ? "sample-alt" : "sample-orig")
                .fork(index)
                .next_u64());
        for (auto fi : pick) {
          seq[fi].split = split;
          ds.samples.push_back(std::move(seq[fi]));
        }
      }
    }
  };
  emit_split(Split::train, cfg.videos_train);
  emit_split(Split::val, cfg.videos_val);
  emit_split(Split::test, cfg.videos_test);
  return ds;
}

// ---------------------------------------------------------------------------
// manifest and corpus I/O
// ---------------------------------------------------------------------------

namespace detail {

inline std::string image_file_name(const LabeledSample& s) {
  std::ostringstream os;
  os << s.video_id << "_f" << std::setw(3) << std::setfill('0') << s.frame_index
     << (s.label ? "_alt" : "_orig") << ".png";
  return os.str();
}

inline std::string mask_file_name(const LabeledSample& s) {
  std::ostringstream os;
  os << s.video_id << "_f" << std::setw(3) << std::setfill('0') << s.frame_index
     << "_mask.png";
  return os.str();
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

inline const char* kManifestHeader =
    "video_id,frame_index,path,label,cx,cy,w,h,split";

inline void write_manifest(const Dataset& ds, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write manifest: " + path);
  f << kManifestHeader << "\n";
  f << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& s : ds.samples) {
    f << s.video_id << ',' << s.frame_index << ',' << s.image_path << ','
      << s.label << ',' << s.box.cx << ',' << s.box.cy << ',' << s.box.w << ','
      << s.box.h << ',' << split_name(s.split) << "\n";
  }
  if (!f) throw IoError("failed while writing manifest: " + path);
}

/// Writes images, masks, manifest.csv and config.json under dir.
inline void write_corpus(Dataset& ds, const SynthConfig& cfg,
                         const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "masks");
  for (auto& s : ds.samples) {
    s.image_path = "images/" + detail::image_file_name(s);
    write_png((fs::path(dir) / s.image_path).string(), s.image);
    if (s.label == 1 && !s.mask.empty()) {
      s.mask_path = "masks/" + detail::mask_file_name(s);
      write_png((fs::path(dir) / s.mask_path).string(), s.mask);
    }
  }
  ds.root = dir;
  write_manifest(ds, (fs::path(dir) / "manifest.csv").string());
  std::ofstream cf(fs::path(dir) / "config.json");
  if (!cf) throw IoError("cannot write config snapshot under " + dir);
  nlohmann::json j = cfg;
  cf << j.dump(2) << "\n";
}

/// Loads a manifest written by write_corpus (or any file in that schema).
/// Image files are verified to exist; pixels load lazily.
inline Dataset load_manifest(const std::string& path) {
  namespace fs = std::filesystem;
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest: " + path);
  const std::string root = fs::path(path).parent_path().string();

  Dataset ds;
  ds.root = root.empty() ? "." : root;
  std::string line;
  if (!std::getline(f, line))
    throw IntegrityError("manifest is empty: " + path);
  if (line != kManifestHeader && line != std::string(kManifestHeader) + "\r")
    throw IntegrityError("manifest header mismatch in " + path);
  int row = 1;
  while (std::getline(f, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cols = detail::split_csv_line(line);
    if (cols.size() != 9)
      throw IntegrityError("manifest row " + std::to_string(row) + " in " +
                           path + ": expected 9 columns, got " +
                           std::to_string(cols.size()));
    LabeledSample s;
    try {
      s.video_id = cols[0];
      s.frame_index = std::stoi(cols[1]);
      s.image_path = cols[2];
      s.label = std::stoi(cols[3]);
      s.box.cx = std::stod(cols[4]);
      s.box.cy = std::stod(cols[5]);
      s.box.w = std::stod(cols[6]);
      s.box.h = std::stod(cols[7]);
      s.box.source = BoxSource::annotation;
      s.split = split_from_name(cols[8]);
    } catch (const std::exception& e) {
      throw IntegrityError("manifest row " + std::to_string(row) + " in " +
                           path + " is malformed: " + e.what());
    }
    if (s.label != 0 && s.label != 1)
      throw IntegrityError("manifest row " + std::to_string(row) +
                           ": label must be 0 or 1");
    const fs::path img = fs::path(ds.root) / s.image_path;
    if (!fs::exists(img))
      throw IoError("manifest row " + std::to_string(row) +
                    " references missing image: " + img.string());
    const fs::path mask =
        fs::path(ds.root) / "masks" / detail::mask_file_name(s);
    if (s.label == 1 && fs::exists(mask))
      s.mask_path = "masks/" + detail::mask_file_name(s);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// FaceForensics-style directory trees
// ---------------------------------------------------------------------------

/// Layout: root/<split>/<video_id>/{original,altered}/<index .png>, with one
/// JSON sidecar per video under root/annotations/<video_id>.json:
///   {"video_id": ..., "frames": [{"index": n, "box": {cx,cy,w,h}, "label": l}]}
/// When no split directories exist, videos are assigned 704:150:150 by a
/// seeded hash of the video id.
inline Dataset load_faceforensics_tree(const std::string& root,
                                       std::uint64_t split_seed = 0) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root))
    throw IoError("dataset root is not a directory: " + root);
  const fs::path ann_dir = fs::path(root) / "annotations";
  if (!fs::is_directory(ann_dir))
    throw IoError("missing annotations directory under " + root);

  Dataset ds;
  ds.root = root;

  auto hash_split = [split_seed](const std::string& vid) {
    const std::uint64_t h = mix64(hash_label(vid) ^ mix64(split_seed));
    const std::uint64_t r = h % 1004;  // 704:150:150
    if (r < 704) return Split::train;
    if (r < 854) return Split::val;
    return Split::test;
  };

  auto load_video = [&](const fs::path& vid_dir, Split split) {
    const std::string vid = vid_dir.filename().string();
    const fs::path sidecar = ann_dir / (vid + ".json");
    if (!fs::exists(sidecar))
      throw IoError("missing annotation sidecar: " + sidecar.string());
    std::ifstream jf(sidecar);
    nlohmann::json j;
    try {
      jf >> j;
    } catch (const std::exception& e) {
      throw IntegrityError("malformed sidecar " + sidecar.string() + ": " +
                           e.what());
    }
    for (const auto& fr : j.at("frames")) {
      LabeledSample s;
      s.video_id = vid;
      s.frame_index = fr.at("index").get<int>();
      s.label = fr.at("label").get<int>();
      const auto& b = fr.at("box");
      s.box.cx = b.at("cx").get<double>();
      s.box.cy = b.at("cy").get<double>();
      s.box.w = b.at("w").get<double>();
      s.box.h = b.at("h").get<double>();
      s.box.source = BoxSource::annotation;
      s.split = split;
      std::ostringstream name;
      name << std::setw(6) << std::setfill('0') << s.frame_index << ".png";
      const fs::path img =
          vid_dir / (s.label ? "altered" : "original") / name.str();
      if (!fs::exists(img))
        throw IoError("sidecar " + sidecar.string() +
                      " references missing image: " + img.string());
      s.image_path = fs::relative(img, root).string();
      ds.samples.push_back(std::move(s));
    }
  };

  bool has_split_dirs = false;
  for (const char* sp : {"train", "val", "test"})
    if (fs::is_directory(fs::path(root) / sp)) has_split_dirs = true;

  if (has_split_dirs) {
    for (const char* sp : {"train", "val", "test"}) {
      const fs::path dir = fs::path(root) / sp;
      if (!fs::is_directory(dir)) continue;
      std::vector<fs::path> vids;
      for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) vids.push_back(e.path());
      std::sort(vids.begin(), vids.end());
      for (const auto& v : vids) load_video(v, split_from_name(sp));
    }
  } else {
    std::vector<fs::path> vids;
    for (const auto& e : fs::directory_iterator(root)) {
      if (!e.is_directory() || e.path().filename() == "annotations") continue;
      vids.push_back(e.path());
    }
    std::sort(vids.begin(), vids.end());
    for (const auto& v : vids)
      load_video(v, hash_split(v.filename().string()));
  }
  return ds;
}

}  // namespace reenact
