// Five-stream model: construction, topology inventory, stream isolation,
// fusion behavior.

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "reenact/model.hpp"
#include "reenact/rng.hpp"
#include "support/test_util.hpp"

using namespace reenact;
using TF = Tensor<float>;
using TD = Tensor<double>;

namespace {

BackboneConfig tiny_config() {
  BackboneConfig bb;
  bb.stage_widths = {4, 6};
  bb.blocks_per_stage = {1, 1};
  bb.input_resolution = 16;
  return bb;
}

template <class Real>
RegionBatch<Real> random_batch(const BackboneConfig& bb, std::int64_t n,
                               std::uint64_t seed) {
  Rng rng(seed);
  RegionBatch<Real> batch;
  for (int s = 0; s < 5; ++s) {
    batch.x[s] =
        Tensor<Real>({n, 3, bb.input_resolution, bb.input_resolution});
    for (auto& v : batch.x[s].values())
      v = static_cast<Real>(rng.uniform());
  }
  return batch;
}

}  // namespace

TEST_CASE("same seed builds bit-identical parameters", "[model]") {
  const auto bb = tiny_config();
  MultiStreamModel<float> a(bb, 99), b(bb, 99);
  REQUIRE(a.parameters().size() == b.parameters().size());
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    REQUIRE(a.parameters()[i].name == b.parameters()[i].name);
    REQUIRE(a.parameters()[i].tensor.values() ==
            b.parameters()[i].tensor.values());
  }
  MultiStreamModel<float> c(bb, 100);
  REQUIRE(c.parameters()[0].tensor.values() !=
          a.parameters()[0].tensor.values());
}

TEST_CASE("paper variant matches the standard 18-layer inventory", "[model]") {
  auto cfg = BackboneConfig::paper();
  cfg.validate();
  MultiStreamModel<float> model(cfg, 1);

  // Frozen expected inventory for one stream (name suffix -> shape).
  const std::vector<std::pair<std::string, Shape>> expected = {
      {"stem.w", {64, 3, 7, 7}},        {"stem.b", {64}},
      {"stem_bn.gamma", {64}},          {"stem_bn.beta", {64}},
      {"block1.conv1.w", {64, 64, 3, 3}},   {"block1.conv2.w", {64, 64, 3, 3}},
      {"block2.conv1.w", {64, 64, 3, 3}},   {"block2.conv2.w", {64, 64, 3, 3}},
      {"block3.conv1.w", {128, 64, 3, 3}},  {"block3.conv2.w", {128, 128, 3, 3}},
      {"block3.down.w", {128, 64, 1, 1}},   {"block4.conv1.w", {128, 128, 3, 3}},
      {"block4.conv2.w", {128, 128, 3, 3}}, {"block5.conv1.w", {256, 128, 3, 3}},
      {"block5.conv2.w", {256, 256, 3, 3}}, {"block5.down.w", {256, 128, 1, 1}},
      {"block6.conv1.w", {256, 256, 3, 3}}, {"block6.conv2.w", {256, 256, 3, 3}},
      {"block7.conv1.w", {512, 256, 3, 3}}, {"block7.conv2.w", {512, 512, 3, 3}},
      {"block7.down.w", {512, 256, 1, 1}},  {"block8.conv1.w", {512, 512, 3, 3}},
      {"block8.conv2.w", {512, 512, 3, 3}}, {"head.w", {2, 512}},
      {"head.b", {2}},
  };
  // Index stream-1 parameters by suffix.
  std::map<std::string, Shape> have;
  for (const auto& p : model.parameters())
    if (p.name.starts_with("s1."))
      have[p.name.substr(3)] = p.tensor.shape();
  for (const auto& [name, shape] : expected) {
    INFO("parameter " << name);
    REQUIRE(have.contains(name));
    REQUIRE(have[name] == shape);
  }
  // Fusion head is 10 -> 2 with bias.
  std::map<std::string, Shape> top;
  for (const auto& p : model.parameters()) top[p.name] = p.tensor.shape();
  REQUIRE(top["fusion.w"] == Shape{2, 10});
  REQUIRE(top["fusion.b"] == Shape{2});

  // One-stream forward at 224 lands on 7x7 maps over 512 channels.
  Rng rng(5);
  TF x({1, 3, 224, 224});
  for (auto& v : x.values()) v = static_cast<float>(rng.uniform());
  NoGradGuard ng;
  auto out = model.stream_forward(1, x, false);
  REQUIRE(out.feature_maps.shape() == Shape{1, 512, 7, 7});
  REQUIRE(out.logits.shape() == Shape{1, 2});
}

TEST_CASE("desk variant forward produces two fused logits", "[model]") {
  auto bb = BackboneConfig::desk();
  MultiStreamModel<float> model(bb, 7);
  REQUIRE(model.param_count() > 0);
  auto batch = random_batch<float>(bb, 2, 3);
  NoGradGuard ng;
  auto out = model.forward(batch, false);
  REQUIRE(out.fused_logits.shape() == Shape{2, 2});
  REQUIRE(out.concatenated.shape() == Shape{2, 10});
  // Feature maps at S / 2^(#downsamples) = 64 / 8.
  for (int s = 0; s < 5; ++s)
    REQUIRE(out.feature_maps[s].shape() == Shape{2, bb.stage_widths.back(), 8, 8});
}

TEST_CASE("invalid configurations are rejected", "[model]") {
  BackboneConfig bad = tiny_config();
  bad.stage_widths = {4, 0};
  REQUIRE_THROWS_AS((MultiStreamModel<float>(bad, 1)), ConfigError);
  BackboneConfig mismatch = tiny_config();
  mismatch.blocks_per_stage = {1};
  REQUIRE_THROWS_AS((MultiStreamModel<float>(mismatch, 1)), ConfigError);
  BackboneConfig odd = tiny_config();
  odd.input_resolution = 18;  // not divisible by the downsample factor
  REQUIRE_THROWS_AS((MultiStreamModel<float>(odd, 1)), ConfigError);
}

TEST_CASE("resolution mismatch raises invalid-argument", "[model]") {
  const auto bb = tiny_config();
  MultiStreamModel<float> model(bb, 1);
  auto batch = random_batch<float>(bb, 1, 1);
  batch.x[2] = TF({1, 3, 8, 8});
  NoGradGuard ng;
  REQUIRE_THROWS_AS(model.forward(batch, false), std::invalid_argument);
}

TEST_CASE("zeroed fusion weights pin fused logits to the bias", "[model]") {
  const auto bb = tiny_config();
  MultiStreamModel<double> model(bb, 11);
  auto& fusion = model.fusion();
  for (auto& v : fusion.w.values()) v = 0;
  fusion.b.values() = {0.25, -1.5};
  NoGradGuard ng;
  auto out = model.forward(random_batch<double>(bb, 3, 2), false);
  for (int n = 0; n < 3; ++n) {
    REQUIRE(out.fused_logits[n * 2 + 0] == 0.25);
    REQUIRE(out.fused_logits[n * 2 + 1] == -1.5);
  }
}

TEST_CASE("fusion weights can select a single stream's logits", "[model]") {
  const auto bb = tiny_config();
  MultiStreamModel<double> model(bb, 12);
  auto& fusion = model.fusion();
  for (auto& v : fusion.w.values()) v = 0;
  fusion.w.data()[0 * 10 + 0] = 1.0;  // fused[0] <- concat[0] (stream-1 logit 0)
  fusion.w.data()[1 * 10 + 1] = 1.0;  // fused[1] <- concat[1]
  for (auto& v : fusion.b.values()) v = 0;
  NoGradGuard ng;
  auto out = model.forward(random_batch<double>(bb, 2, 9), false);
  for (int n = 0; n < 2; ++n) {
    REQUIRE(testutil::close(out.fused_logits[n * 2 + 0],
                            out.stream_logits[0][n * 2 + 0], 1e-12));
    REQUIRE(testutil::close(out.fused_logits[n * 2 + 1],
                            out.stream_logits[0][n * 2 + 1], 1e-12));
  }
}

TEST_CASE("streams are isolated: X_j only reaches stream j", "[model]") {
  const auto bb = tiny_config();
  MultiStreamModel<double> model(bb, 13);
  NoGradGuard ng;
  auto batch = random_batch<double>(bb, 1, 4);
  const auto base = model.forward(batch, false);

  SECTION("pixel perturbation (finite-difference style)") {
    for (int j = 0; j < 5; ++j) {
      auto perturbed = random_batch<double>(bb, 1, 4);
      perturbed.x[j].data()[17] += 0.37;
      auto out = model.forward(perturbed, false);
      for (int i = 0; i < 5; ++i) {
        if (i == j) continue;
        REQUIRE(out.stream_logits[i].values() ==
                base.stream_logits[i].values());
      }
      REQUIRE(out.stream_logits[j].values() != base.stream_logits[j].values());
    }
  }
  SECTION("permuting X2's pixels changes only stream 2") {
    auto perm = random_batch<double>(bb, 1, 4);
    auto& vals = perm.x[1].values();
    std::reverse(vals.begin(), vals.end());
    auto out = model.forward(perm, false);
    REQUIRE(out.stream_logits[0].values() == base.stream_logits[0].values());
    for (int i = 2; i < 5; ++i)
      REQUIRE(out.stream_logits[i].values() == base.stream_logits[i].values());
    REQUIRE(out.stream_logits[1].values() != base.stream_logits[1].values());
  }
}

TEST_CASE("stream_forward agrees with the joint forward", "[model]") {
  const auto bb = tiny_config();
  MultiStreamModel<double> model(bb, 14);
  NoGradGuard ng;
  auto batch = random_batch<double>(bb, 2, 21);
  auto joint = model.forward(batch, false);
  for (int s = 1; s <= 5; ++s) {
    auto solo = model.stream_forward(s, batch.x[s - 1], false);
    REQUIRE(solo.logits.values() == joint.stream_logits[s - 1].values());
  }
  REQUIRE_THROWS_AS(model.stream_forward(0, batch.x[0], false),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(model.stream_forward(6, batch.x[0], false),
                    std::invalid_argument);
}

TEST_CASE("eval-mode forward is deterministic and side-effect free",
          "[model]") {
  const auto bb = tiny_config();
  MultiStreamModel<double> model(bb, 15);
  auto batch = random_batch<double>(bb, 2, 5);
  NoGradGuard ng;
  auto a = model.forward(batch, false);
  auto b = model.forward(batch, false);
  REQUIRE(a.fused_logits.values() == b.fused_logits.values());
  for (int s = 0; s < 5; ++s)
    REQUIRE(a.stream_logits[s].values() == b.stream_logits[s].values());
}

TEST_CASE("fusion output is affine in the concatenated scores", "[model]") {
  const auto bb = tiny_config();
  MultiStreamModel<double> model(bb, 16);
  Rng rng(6);
  TD z1({2, 10}), z2({2, 10});
  for (auto& v : z1.values()) v = rng.normal();
  for (auto& v : z2.values()) v = rng.normal();
  const double a = 0.3;
  TD mix({2, 10});
  for (int i = 0; i < 20; ++i)
    mix.data()[i] = a * z1[i] + (1 - a) * z2[i];
  NoGradGuard ng;
  auto f1 = model.fusion().forward(z1);
  auto f2 = model.fusion().forward(z2);
  auto fm = model.fusion().forward(mix);
  for (int i = 0; i < 4; ++i)
    REQUIRE(testutil::close(fm[i], a * f1[i] + (1 - a) * f2[i], 1e-9));
}

TEST_CASE("parameter sets of the streams are disjoint", "[model]") {
  const auto bb = tiny_config();
  MultiStreamModel<double> model(bb, 17);
  auto batch = random_batch<double>(bb, 1, 8);
  NoGradGuard ng;
  const auto before = model.forward(batch, false);
  // Nudge every stream-1 parameter.
  for (auto& p : model.parameters())
    if (p.name.starts_with("s1."))
      for (auto& v : p.tensor.values()) v += 0.05;
  const auto after = model.forward(batch, false);
  REQUIRE(after.stream_logits[0].values() != before.stream_logits[0].values());
  for (int s = 1; s < 5; ++s)
    REQUIRE(after.stream_logits[s].values() ==
            before.stream_logits[s].values());
}
