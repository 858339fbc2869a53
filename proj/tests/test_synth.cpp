// Synthetic corpus generation, manifests, and the annotation-tree loader.

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "reenact/png_io.hpp"
#include "reenact/synth.hpp"
#include "support/test_util.hpp"

using namespace reenact;
namespace fs = std::filesystem;

namespace {

SynthConfig tiny_config() {
  SynthConfig cfg;
  cfg.videos_train = 3;
  cfg.videos_val = 1;
  cfg.videos_test = 1;
  cfg.frames_per_video = 6;
  cfg.frames_sampled = 4;
  cfg.image_size = 64;
  cfg.seed = 4242;
  return cfg;
}

}  // namespace

TEST_CASE("strength 0 makes altered frames byte-identical", "[synth]") {
  SynthConfig cfg = tiny_config();
  cfg.artifact_strength = 0.0;
  const auto orig = gen_video(cfg, 0, 0);
  const auto alt = gen_video(cfg, 0, 1);
  REQUIRE(orig.size() == alt.size());
  for (std::size_t i = 0; i < orig.size(); ++i)
    REQUIRE(orig[i].image.px == alt[i].image.px);
}

TEST_CASE("artifact energy is confined to the declared regions", "[synth]") {
  SynthConfig cfg = tiny_config();
  const auto orig = gen_video(cfg, 1, 0);
  const auto alt = gen_video(cfg, 1, 1);
  for (std::size_t f = 0; f < orig.size(); ++f) {
    const auto& mask = alt[f].mask;
    REQUIRE_FALSE(mask.empty());
    double inside = 0, outside = 0;
    std::int64_t n_in = 0, n_out = 0;
    double total = 0, total_in = 0;
    for (int y = 0; y < cfg.image_size; ++y)
      for (int x = 0; x < cfg.image_size; ++x) {
        double d = 0;
        for (int c = 0; c < 3; ++c)
          d += std::abs(static_cast<double>(alt[f].image.at(y, x, c)) -
                        orig[f].image.at(y, x, c));
        total += d;
        if (mask.at(y, x, 0) > 0) {
          inside += d;
          total_in += d;
          ++n_in;
        } else {
          outside += d;
          ++n_out;
        }
      }
    REQUIRE(n_in > 0);
    REQUIRE(n_out > 0);
    REQUIRE(total > 0);
    // All injected energy lies inside the declared masks (>= 80% required).
    REQUIRE(total_in / total >= 0.8);
    REQUIRE(inside / n_in > 5.0 * (outside / std::max<std::int64_t>(n_out, 1)));
  }
}

TEST_CASE("mean difference inside the mouth region dominates", "[synth]") {
  SynthConfig cfg = tiny_config();
  const auto orig = gen_video(cfg, 2, 0);
  const auto alt = gen_video(cfg, 2, 1);
  // Reconstruct the mouth ellipse from the published box-independent
  // geometry by measuring where differences live: lower half of the mask.
  const auto& mask = alt[0].mask;
  double inside = 0;
  std::int64_t n_in = 0;
  double outside = 0;
  std::int64_t n_out = 0;
  for (int y = 0; y < cfg.image_size; ++y)
    for (int x = 0; x < cfg.image_size; ++x) {
      double d = 0;
      for (int c = 0; c < 3; ++c)
        d += std::abs(static_cast<double>(alt[0].image.at(y, x, c)) -
                      orig[0].image.at(y, x, c));
      if (mask.at(y, x, 0) > 0 && y > cfg.image_size / 2) {
        inside += d;
        ++n_in;
      } else if (mask.at(y, x, 0) == 0) {
        outside += d;
        ++n_out;
      }
    }
  REQUIRE(n_in > 0);
  REQUIRE(inside / n_in > 5.0 * (outside / n_out + 1e-12));
}

TEST_CASE("generation is a pure function of config and seed", "[synth]") {
  const SynthConfig cfg = tiny_config();
  const auto a = gen_dataset(cfg);
  const auto b = gen_dataset(cfg);
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    REQUIRE(a.samples[i].video_id == b.samples[i].video_id);
    REQUIRE(a.samples[i].frame_index == b.samples[i].frame_index);
    REQUIRE(a.samples[i].image.px == b.samples[i].image.px);
  }
}

TEST_CASE("dataset counts, split disjointness and label balance", "[synth]") {
  SynthConfig cfg = tiny_config();
  const auto ds = gen_dataset(cfg);
  REQUIRE(ds.samples.size() ==
          static_cast<std::size_t>(cfg.total_videos() * 2 * cfg.frames_sampled));

  std::set<std::string> train_vids, val_vids, test_vids;
  int pos_train = 0, n_train = 0;
  for (const auto& s : ds.samples) {
    if (s.split == Split::train) {
      train_vids.insert(s.video_id);
      pos_train += s.label;
      ++n_train;
    } else if (s.split == Split::val) {
      val_vids.insert(s.video_id);
    } else {
      test_vids.insert(s.video_id);
    }
  }
  for (const auto& v : train_vids) {
    REQUIRE_FALSE(val_vids.contains(v));
    REQUIRE_FALSE(test_vids.contains(v));
  }
  for (const auto& v : val_vids) REQUIRE_FALSE(test_vids.contains(v));
  REQUIRE(pos_train * 2 == n_train);  // exactly 50/50
}

TEST_CASE("split disjointness holds across seeds", "[synth]") {
  for (std::uint64_t seed : {1ULL, 77ULL, 31337ULL}) {
    SynthConfig cfg = tiny_config();
    cfg.seed = seed;
    cfg.frames_per_video = 3;
    cfg.frames_sampled = 2;
    const auto ds = gen_dataset(cfg);
    std::map<std::string, std::set<Split>> splits_of;
    for (const auto& s : ds.samples) splits_of[s.video_id].insert(s.split);
    for (const auto& [vid, splits] : splits_of) REQUIRE(splits.size() == 1);
  }
}

TEST_CASE("corpus round-trips through write_corpus and load_manifest",
          "[synth]") {
  testutil::TempDir tmp("corpus");
  SynthConfig cfg = tiny_config();
  auto ds = gen_dataset(cfg);
  write_corpus(ds, cfg, tmp.str());

  auto loaded = load_manifest(tmp.file("manifest.csv"));
  REQUIRE(loaded.samples.size() == ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& a = ds.samples[i];
    const auto& b = loaded.samples[i];
    REQUIRE(a.video_id == b.video_id);
    REQUIRE(a.frame_index == b.frame_index);
    REQUIRE(a.label == b.label);
    REQUIRE(a.split == b.split);
    REQUIRE(a.image_path == b.image_path);
    REQUIRE(a.box.cx == b.box.cx);
    REQUIRE(a.box.cy == b.box.cy);
    REQUIRE(a.box.w == b.box.w);
    REQUIRE(a.box.h == b.box.h);
  }
  // Pixels survive the PNG round trip exactly.
  auto& reloaded = loaded.samples[0];
  const ImageU8& img = sample_image(reloaded, loaded.root);
  REQUIRE(img.px == ds.samples[0].image.px);
  // Altered samples get their masks back.
  for (auto& s : loaded.samples)
    if (s.label == 1) REQUIRE_FALSE(s.mask_path.empty());
  // Config snapshot is present and parses.
  std::ifstream cf(tmp.file("config.json"));
  nlohmann::json j;
  cf >> j;
  REQUIRE(j.at("seed").get<std::uint64_t>() == cfg.seed);
}

TEST_CASE("manifest referencing a missing image names the path", "[synth]") {
  testutil::TempDir tmp("badmanifest");
  SynthConfig cfg = tiny_config();
  auto ds = gen_dataset(cfg);
  write_corpus(ds, cfg, tmp.str());
  fs::remove(fs::path(tmp.str()) / ds.samples[3].image_path);
  try {
    load_manifest(tmp.file("manifest.csv"));
    FAIL("expected IoError");
  } catch (const IoError& e) {
    REQUIRE(std::string(e.what()).find(ds.samples[3].image_path) !=
            std::string::npos);
  }
}

TEST_CASE("malformed manifest rows are rejected with the row number",
          "[synth]") {
  testutil::TempDir tmp("malformed");
  {
    std::ofstream f(tmp.file("manifest.csv"));
    f << kManifestHeader << "\n";
    f << "vid0000,notanumber,images/x.png,0,1,2,3,4,train\n";
  }
  try {
    load_manifest(tmp.file("manifest.csv"));
    FAIL("expected IntegrityError");
  } catch (const IntegrityError& e) {
    REQUIRE(std::string(e.what()).find("row 2") != std::string::npos);
  }
}

TEST_CASE("annotation-tree fixture loads with annotation boxes", "[synth]") {
  testutil::TempDir tmp("fftree");
  // Build a miniature split-directory tree with JSON sidecars.
  SynthConfig cfg = tiny_config();
  cfg.frames_per_video = 2;
  const auto orig = gen_video(cfg, 0, 0);
  const auto alt = gen_video(cfg, 0, 1);

  const fs::path root = tmp.path;
  const fs::path vdir = root / "train" / "vid0000";
  fs::create_directories(vdir / "original");
  fs::create_directories(vdir / "altered");
  fs::create_directories(root / "annotations");

  nlohmann::json sidecar;
  sidecar["video_id"] = "vid0000";
  sidecar["frames"] = nlohmann::json::array();
  for (int t = 0; t < 2; ++t) {
    char name[16];
    std::snprintf(name, sizeof(name), "%06d.png", t);
    write_png((vdir / "original" / name).string(), orig[t].image);
    write_png((vdir / "altered" / name).string(), alt[t].image);
    for (int label = 0; label < 2; ++label) {
      const auto& box = (label ? alt : orig)[t].box;
      sidecar["frames"].push_back(
          {{"index", t},
           {"label", label},
           {"box",
            {{"cx", box.cx}, {"cy", box.cy}, {"w", box.w}, {"h", box.h}}}});
    }
  }
  std::ofstream(root / "annotations" / "vid0000.json") << sidecar.dump(2);

  auto ds = load_faceforensics_tree(root.string());
  REQUIRE(ds.samples.size() == 4);
  for (auto& s : ds.samples) {
    REQUIRE(s.video_id == "vid0000");
    REQUIRE(s.split == Split::train);
    REQUIRE(s.box.source == BoxSource::annotation);
    REQUIRE(s.box.w > 0);
    const ImageU8& img = sample_image(s, ds.root);
    REQUIRE(img.h == cfg.image_size);
  }
}

TEST_CASE("hash-based split assignment is pure and proportioned", "[synth]") {
  // No split dirs: assignment must be a pure function of (video_id, seed).
  const std::uint64_t seed = 7;
  std::map<std::string, Split> first;
  for (int trial = 0; trial < 2; ++trial) {
    int train = 0, val = 0, test = 0;
    for (int v = 0; v < 1004; ++v) {
      const std::string vid = detail::video_name(v);
      const std::uint64_t h = mix64(hash_label(vid) ^ mix64(seed));
      const auto r = h % 1004;
      const Split s =
          r < 704 ? Split::train : (r < 854 ? Split::val : Split::test);
      if (trial == 0)
        first[vid] = s;
      else
        REQUIRE(first[vid] == s);
      (s == Split::train ? train : s == Split::val ? val : test)++;
    }
    // Roughly 704:150:150.
    REQUIRE(train > 600);
    REQUIRE(val > 100);
    REQUIRE(test > 100);
  }
}
