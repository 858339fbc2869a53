#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "reenact/adam.hpp"
#include "reenact/errors.hpp"
#include "reenact/ops.hpp"
#include "reenact/preprocess.hpp"
#include "reenact/rng.hpp"
#include "reenact/tensor.hpp"
#include "reenact/threading.hpp"

namespace reenact {

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

/// Residual backbone description. The paper-scale variant is the ResNet-18
/// topology; the desk variant is the same block structure at toy size.
struct BackboneConfig {
  std::vector<int> stage_widths{8, 16, 32};
  std::vector<int> blocks_per_stage{1, 1, 1};
  int input_resolution = 64;
  std::string variant = "desk";  // "desk" or "paper"

  static BackboneConfig desk() { return BackboneConfig{}; }

  static BackboneConfig paper() {
    BackboneConfig c;
    c.stage_widths = {64, 128, 256, 512};
    c.blocks_per_stage = {2, 2, 2, 2};
    c.input_resolution = 224;
    c.variant = "paper";
    return c;
  }

  int stem_kernel() const { return variant == "paper" ? 7 : 3; }
  int stem_stride() const { return variant == "paper" ? 2 : 1; }
  int stem_padding() const { return variant == "paper" ? 3 : 1; }

  /// Total spatial reduction from input to the final feature maps.
  int downsample_factor() const {
    int f = stem_stride() * 2;  // stem stride, then the 2x2 pool
    for (std::size_t i = 1; i < stage_widths.size(); ++i) f *= 2;
    return f;
  }

  void validate() const {
    if (variant != "desk" && variant != "paper")
      throw ConfigError("BackboneConfig: unknown variant '" + variant + "'");
    if (stage_widths.empty() ||
        stage_widths.size() != blocks_per_stage.size())
      throw ConfigError(
          "BackboneConfig: stage_widths and blocks_per_stage must be "
          "non-empty and equally sized");
    for (int w : stage_widths)
      if (w <= 0) throw ConfigError("BackboneConfig: stage widths must be > 0");
    for (int b : blocks_per_stage)
      if (b <= 0) throw ConfigError("BackboneConfig: blocks per stage must be > 0");
    if (input_resolution < 8)
      throw ConfigError("BackboneConfig: input resolution must be >= 8");
    if (input_resolution % downsample_factor() != 0)
      throw ConfigError(
          "BackboneConfig: resolution must be divisible by the downsample "
          "factor " +
          std::to_string(downsample_factor()));
  }

  bool operator==(const BackboneConfig&) const = default;
};

// ---------------------------------------------------------------------------
// layers
// ---------------------------------------------------------------------------

namespace detail {

template <class Real>
struct Conv2dLayer {
  Tensor<Real> w, b;
  int stride = 1, padding = 0;

  Conv2dLayer() = default;
  Conv2dLayer(int in, int out, int k, int stride_, int padding_)
      : w(Tensor<Real>({out, in, k, k}, true)),
        b(Tensor<Real>({out}, true)),
        stride(stride_),
        padding(padding_) {}

  Tensor<Real> forward(const Tensor<Real>& x) const {
    return conv2d(x, w, b, stride, padding);
  }
};

template <class Real>
struct BatchNormLayer {
  Tensor<Real> gamma, beta;
  BatchNormStats<Real> stats;
  Real momentum = Real(0.1);
  Real eps = Real(1e-5);

  BatchNormLayer() = default;
  explicit BatchNormLayer(int channels)
      : gamma(Tensor<Real>::full({channels}, Real(1), true)),
        beta(Tensor<Real>({channels}, true)),
        stats(channels) {}

  Tensor<Real> forward(const Tensor<Real>& x, bool training) {
    return batch_norm2d(x, gamma, beta, stats, training, momentum, eps);
  }
};

template <class Real>
struct LinearLayer {
  Tensor<Real> w, b;

  LinearLayer() = default;
  LinearLayer(int in, int out)
      : w(Tensor<Real>({out, in}, true)), b(Tensor<Real>({out}, true)) {}

  Tensor<Real> forward(const Tensor<Real>& x) const { return linear(x, w, b); }
};

template <class Real>
struct BasicBlock {
  Conv2dLayer<Real> conv1, conv2;
  BatchNormLayer<Real> bn1, bn2;
  bool has_downsample = false;
  Conv2dLayer<Real> down_conv;
  BatchNormLayer<Real> down_bn;

  BasicBlock() = default;
  BasicBlock(int in, int out, int stride)
      : conv1(in, out, 3, stride, 1),
        conv2(out, out, 3, 1, 1),
        bn1(out),
        bn2(out),
        has_downsample(stride != 1 || in != out) {
    if (has_downsample) {
      down_conv = Conv2dLayer<Real>(in, out, 1, stride, 0);
      down_bn = BatchNormLayer<Real>(out);
    }
  }

  Tensor<Real> forward(const Tensor<Real>& x, bool training) {
    Tensor<Real> h = relu(bn1.forward(conv1.forward(x), training));
    h = bn2.forward(conv2.forward(h), training);
    Tensor<Real> shortcut =
        has_downsample ? down_bn.forward(down_conv.forward(x), training) : x;
    return relu(add(h, shortcut));
  }
};

}  // namespace detail

/// Non-trainable persistent state (batch-norm running statistics).
template <class Real>
struct NamedBuffer {
  std::string name;
  std::vector<Real>* data;
};

// ---------------------------------------------------------------------------
// backbone
// ---------------------------------------------------------------------------

template <class Real>
struct BackboneOutput {
  Tensor<Real> logits;        // [N,2]
  Tensor<Real> feature_maps;  // [N,C,h,w] final conv activations
};

template <class Real>
class Backbone {
 public:
  Backbone() = default;

  explicit Backbone(const BackboneConfig& cfg) : cfg_(cfg) {
    const int first = cfg.stage_widths[0];
    stem_ = detail::Conv2dLayer<Real>(3, first, cfg.stem_kernel(),
                                      cfg.stem_stride(), cfg.stem_padding());
    stem_bn_ = detail::BatchNormLayer<Real>(first);
    int in = first;
    for (std::size_t s = 0; s < cfg.stage_widths.size(); ++s) {
      const int out = cfg.stage_widths[s];
      for (int b = 0; b < cfg.blocks_per_stage[s]; ++b) {
        const int stride = (s > 0 && b == 0) ? 2 : 1;
        blocks_.emplace_back(in, out, stride);
        in = out;
      }
    }
    head_ = detail::LinearLayer<Real>(in, 2);
  }

  BackboneOutput<Real> forward(const Tensor<Real>& x, bool training) {
    if (x.ndim() != 4 || x.dim(1) != 3 || x.dim(2) != cfg_.input_resolution ||
        x.dim(3) != cfg_.input_resolution)
      throw std::invalid_argument(
          "Backbone: expected input [N,3," +
          std::to_string(cfg_.input_resolution) + "," +
          std::to_string(cfg_.input_resolution) + "], got " +
          shape_str(x.shape()));
    Tensor<Real> h = relu(stem_bn_.forward(stem_.forward(x), training));
    h = max_pool2d(h, 2, 2);
    for (auto& block : blocks_) h = block.forward(h, training);
    BackboneOutput<Real> out;
    out.feature_maps = h;
    out.logits = head_.forward(global_avg_pool(h));
    return out;
  }

  const detail::LinearLayer<Real>& head() const { return head_; }
  detail::LinearLayer<Real>& head() { return head_; }

  void collect(const std::string& prefix, std::vector<NamedParam<Real>>& params,
               std::vector<NamedBuffer<Real>>& buffers) {
    auto conv = [&](const std::string& n, detail::Conv2dLayer<Real>& l) {
      params.push_back({n + ".w", l.w});
      params.push_back({n + ".b", l.b});
    };
    auto bn = [&](const std::string& n, detail::BatchNormLayer<Real>& l) {
      params.push_back({n + ".gamma", l.gamma});
      params.push_back({n + ".beta", l.beta});
      buffers.push_back({n + ".running_mean", &l.stats.mean});
      buffers.push_back({n + ".running_var", &l.stats.var});
    };
    conv(prefix + ".stem", stem_);
    bn(prefix + ".stem_bn", stem_bn_);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const std::string bp = prefix + ".block" + std::to_string(i + 1);
      conv(bp + ".conv1", blocks_[i].conv1);
      bn(bp + ".bn1", blocks_[i].bn1);
      conv(bp + ".conv2", blocks_[i].conv2);
      bn(bp + ".bn2", blocks_[i].bn2);
      if (blocks_[i].has_downsample) {
        conv(bp + ".down", blocks_[i].down_conv);
        bn(bp + ".down_bn", blocks_[i].down_bn);
      }
    }
    params.push_back({prefix + ".head.w", head_.w});
    params.push_back({prefix + ".head.b", head_.b});
  }

 private:
  BackboneConfig cfg_;
  detail::Conv2dLayer<Real> stem_;
  detail::BatchNormLayer<Real> stem_bn_;
  std::vector<detail::BasicBlock<Real>> blocks_;
  detail::LinearLayer<Real> head_;
};

// ---------------------------------------------------------------------------
// the five-stream model
// ---------------------------------------------------------------------------

/// Batched model input: one [N,3,S,S] tensor per region.
template <class Real>
struct RegionBatch {
  std::array<Tensor<Real>, 5> x;

  std::int64_t batch_size() const { return x[0].dim(0); }
};

/// Per-stream logits, their 10-d concatenation, the fused decision and the
/// retained final feature maps of each stream.
template <class Real>
struct StreamOutputs {
  std::array<Tensor<Real>, 5> stream_logits;
  Tensor<Real> concatenated;  // [N,10]
  Tensor<Real> fused_logits;  // [N,2]
  std::array<Tensor<Real>, 5> feature_maps;
};

/// Five independent residual streams over X1..X5 with 2-way heads, the
/// 10-d score concatenation, and a learned affine fusion on raw logits.
template <class Real>
class MultiStreamModel {
 public:
  MultiStreamModel() = default;

  MultiStreamModel(const BackboneConfig& cfg, std::uint64_t seed)
      : cfg_(cfg), seed_(seed) {
    cfg.validate();
    for (int s = 0; s < 5; ++s) streams_[s] = Backbone<Real>(cfg);
    fusion_ = detail::LinearLayer<Real>(10, 2);
    for (int s = 0; s < 5; ++s)
      streams_[s].collect("s" + std::to_string(s + 1), params_, buffers_);
    params_.push_back({"fusion.w", fusion_.w});
    params_.push_back({"fusion.b", fusion_.b});
    init_parameters(seed);
  }

  const BackboneConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }

  /// The five stream forwards are independent (disjoint parameters and
  /// inputs) and run as parallel tasks; results are identical to sequential
  /// execution.
  StreamOutputs<Real> forward(const RegionBatch<Real>& batch, bool training) {
    for (int s = 0; s < 5; ++s) {
      const auto& x = batch.x[s];
      if (x.ndim() != 4 || x.dim(1) != 3 ||
          x.dim(2) != cfg_.input_resolution || x.dim(3) != cfg_.input_resolution)
        throw std::invalid_argument(
            "forward: region " + std::to_string(s + 1) + " has shape " +
            shape_str(x.shape()) + ", expected [N,3," +
            std::to_string(cfg_.input_resolution) + "," +
            std::to_string(cfg_.input_resolution) + "]");
    }
    StreamOutputs<Real> out;
    parallel_for(5, [&](std::int64_t s) {
      auto r = streams_[s].forward(batch.x[s], training);
      out.stream_logits[s] = r.logits;
      out.feature_maps[s] = r.feature_maps;
    });
    std::vector<Tensor<Real>> parts(out.stream_logits.begin(),
                                    out.stream_logits.end());
    out.concatenated = concat_cols(parts);
    out.fused_logits = fusion_.forward(out.concatenated);
    return out;
  }

  /// Standalone inference for one stream (1-based index, as X1..X5).
  BackboneOutput<Real> stream_forward(int index, const Tensor<Real>& image,
                                      bool training = false) {
    if (index < 1 || index > 5)
      throw std::invalid_argument("stream_forward: index must be in 1..5");
    return streams_[index - 1].forward(image, training);
  }

  std::vector<NamedParam<Real>>& parameters() { return params_; }
  const std::vector<NamedParam<Real>>& parameters() const { return params_; }
  std::vector<NamedBuffer<Real>>& buffers() { return buffers_; }

  const detail::LinearLayer<Real>& fusion() const { return fusion_; }
  detail::LinearLayer<Real>& fusion() { return fusion_; }
  const detail::LinearLayer<Real>& stream_head(int index) const {
    return streams_.at(index - 1).head();
  }
  detail::LinearLayer<Real>& stream_head(int index) {
    return streams_.at(index - 1).head();
  }

  std::int64_t param_count() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += p.tensor.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  /// Full value snapshot (parameters + running stats) for best-checkpoint
  /// bookkeeping.
  std::vector<std::vector<Real>> snapshot() const {
    std::vector<std::vector<Real>> out;
    out.reserve(params_.size() + buffers_.size());
    for (const auto& p : params_) out.push_back(p.tensor.values());
    for (const auto& b : buffers_) out.push_back(*b.data);
    return out;
  }

  void restore(const std::vector<std::vector<Real>>& snap) {
    if (snap.size() != params_.size() + buffers_.size())
      throw std::invalid_argument("restore: snapshot does not match model");
    std::size_t i = 0;
    for (auto& p : params_) p.tensor.values() = snap[i++];
    for (auto& b : buffers_) *b.data = snap[i++];
  }

 private:
  /// He-normal init for conv/linear weights, zeros for biases, identity for
  /// batch-norm. Every tensor draws from a stream derived from its own name,
  /// so initialization depends only on (seed, name).
  void init_parameters(std::uint64_t seed) {
    const Rng root(seed);
    for (auto& p : params_) {
      const auto& shape = p.tensor.shape();
      const bool is_weight = p.name.ends_with(".w");
      if (!is_weight) continue;  // biases stay zero, bn handled below
      std::int64_t fan_in = 1;
      for (std::size_t d = 1; d < shape.size(); ++d) fan_in *= shape[d];
      const Real stddev = std::sqrt(Real(2) / static_cast<Real>(fan_in));
      Rng rng = root.fork("init").fork(p.name);
      for (auto& v : p.tensor.values())
        v = static_cast<Real>(rng.normal()) * stddev;
    }
  }

  BackboneConfig cfg_;
  std::uint64_t seed_ = 0;
  std::array<Backbone<Real>, 5> streams_;
  detail::LinearLayer<Real> fusion_;
  std::vector<NamedParam<Real>> params_;
  std::vector<NamedBuffer<Real>> buffers_;
};

/// Factory matching the build contract: validated config, seeded init.
template <class Real>
MultiStreamModel<Real> build_model(const BackboneConfig& cfg,
                                   std::uint64_t seed) {
  return MultiStreamModel<Real>(cfg, seed);
}

// ---------------------------------------------------------------------------
// region batch assembly
// ---------------------------------------------------------------------------

/// HWC float image -> CHW tensor row at position n of dst [N,3,S,S].
template <class Real>
void copy_region_to_batch(const ImageF& img, Tensor<Real>& dst,
                          std::int64_t n) {
  const std::int64_t S = dst.dim(2);
  Real* base = dst.data() + n * 3 * S * S;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x)
        base[(c * S + y) * S + x] = static_cast<Real>(img.at(y, x, c));
}

template <class Real>
RegionBatch<Real> stack_regions(const std::vector<const RegionSet*>& sets) {
  if (sets.empty()) throw std::invalid_argument("stack_regions: empty batch");
  const std::int64_t N = static_cast<std::int64_t>(sets.size());
  const std::int64_t S = sets[0]->resolution();
  RegionBatch<Real> batch;
  for (int r = 0; r < 5; ++r) {
    batch.x[r] = Tensor<Real>({N, 3, S, S});
    for (std::int64_t n = 0; n < N; ++n)
      copy_region_to_batch(sets[n]->regions[r], batch.x[r], n);
  }
  return batch;
}

template <class Real>
RegionBatch<Real> to_batch(const RegionSet& rs) {
  return stack_regions<Real>({&rs});
}

}  // namespace reenact
