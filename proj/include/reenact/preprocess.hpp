#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "reenact/image.hpp"
#include "reenact/rng.hpp"

namespace reenact {

// ---------------------------------------------------------------------------
// domain types
// ---------------------------------------------------------------------------

enum class BoxSource { detector, annotation };

/// Face bounding box in pixel coordinates, center + extent.
struct FaceBox {
  double cx = 0;
  double cy = 0;
  double w = 0;
  double h = 0;
  BoxSource source = BoxSource::annotation;

  bool valid_for(int frame_h, int frame_w) const {
    if (w <= 0 || h <= 0) return false;
    return cx + w / 2 > 0 && cx - w / 2 < frame_w && cy + h / 2 > 0 &&
           cy - h / 2 < frame_h;
  }
};

/// Named degradation setting; qp follows the quantizer-step-doubling rule.
struct CompressionLevel {
  std::string name = "no-c";
  int qp = 0;

  static CompressionLevel from_qp(int qp) {
    if (qp < 0) throw std::invalid_argument("CompressionLevel: qp must be >= 0");
    CompressionLevel lv;
    lv.qp = qp;
    switch (qp) {
      case 0: lv.name = "no-c"; break;
      case 23: lv.name = "easy-c"; break;
      case 40: lv.name = "hard-c"; break;
      default: lv.name = "custom"; break;
    }
    return lv;
  }
};

/// The five model inputs: full face plus the four grid quadrants, each
/// resized to the model resolution and scaled to [0,1] (HWC float).
struct RegionSet {
  std::array<ImageF, 5> regions;  // x1 full, x2 TL, x3 TR, x4 BL, x5 BR

  const ImageF& full_face() const { return regions[0]; }
  int resolution() const { return regions[0].h; }
};

struct PreprocessConfig {
  int resolution = 224;
  double margin = 1.0;
  // Optional per-channel standardization applied after [0,1] scaling.
  bool per_channel_norm = false;
  std::array<float, 3> channel_mean{0.f, 0.f, 0.f};
  std::array<float, 3> channel_std{1.f, 1.f, 1.f};
  std::uint64_t degrade_seed = 0;
};

// ---------------------------------------------------------------------------
// frame sampling
// ---------------------------------------------------------------------------

/// k distinct frames drawn uniformly without replacement, in index order.
inline std::vector<Frame> sample_frames(const std::vector<Frame>& frames,
                                        std::size_t k, std::uint64_t seed) {
  if (k > frames.size())
    throw std::invalid_argument("sample_frames: k=" + std::to_string(k) +
                                " exceeds frame count " +
                                std::to_string(frames.size()));
  Rng rng(seed);
  auto idx = sample_without_replacement(frames.size(), k, rng);
  std::vector<Frame> out;
  out.reserve(k);
  for (auto i : idx) out.push_back(frames[i]);
  return out;
}

inline std::vector<std::size_t> sample_frame_indices(std::size_t n,
                                                     std::size_t k,
                                                     std::uint64_t seed) {
  if (k > n)
    throw std::invalid_argument("sample_frames: k exceeds frame count");
  Rng rng(seed);
  return sample_without_replacement(n, k, rng);
}

// ---------------------------------------------------------------------------
// cropping and splitting
// ---------------------------------------------------------------------------

/// Square window of side round(margin * max(w,h)) centered on the box,
/// shifted (never shrunk) to stay inside the frame. Side is clamped to the
/// frame only when it cannot fit at all.
inline ImageU8 square_crop(const ImageU8& frame, const FaceBox& box,
                           double margin = 1.0) {
  if (margin < 1.0) throw std::invalid_argument("square_crop: margin must be >= 1");
  if (!box.valid_for(frame.h, frame.w))
    throw std::invalid_argument("square_crop: box does not intersect frame");
  int side = static_cast<int>(std::lround(margin * std::max(box.w, box.h)));
  side = std::max(side, 1);
  const int max_side = std::min(frame.h, frame.w);
  if (side > max_side) {
    std::cerr << "square_crop: requested side " << side
              << " exceeds frame, clamping to " << max_side << "\n";
    side = max_side;
  }
  int left = static_cast<int>(std::lround(box.cx - side / 2.0));
  int top = static_cast<int>(std::lround(box.cy - side / 2.0));
  left = std::clamp(left, 0, frame.w - side);
  top = std::clamp(top, 0, frame.h - side);

  ImageU8 out(side, side, frame.c);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      for (int ch = 0; ch < frame.c; ++ch)
        out.at(y, x, ch) = frame.at(top + y, left + x, ch);
  return out;
}

inline ImageU8 square_crop(const Frame& frame, const FaceBox& box,
                           double margin = 1.0) {
  return square_crop(frame.pixels, box, margin);
}

/// Splits at floor(H/2) / floor(W/2). Quadrant order: TL, TR, BL, BR.
/// The quadrants tile the input exactly.
template <class T>
std::array<Image<T>, 4> grid_split(const Image<T>& img) {
  if (img.h < 2 || img.w < 2)
    throw std::invalid_argument("grid_split: image must be at least 2x2");
  const int ys = img.h / 2;
  const int xs = img.w / 2;
  auto cut = [&](int y0, int y1, int x0, int x1) {
    Image<T> out(y1 - y0, x1 - x0, img.c);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x)
        for (int ch = 0; ch < img.c; ++ch)
          out.at(y - y0, x - x0, ch) = img.at(y, x, ch);
    return out;
  };
  return {cut(0, ys, 0, xs), cut(0, ys, xs, img.w), cut(ys, img.h, 0, xs),
          cut(ys, img.h, xs, img.w)};
}

// ---------------------------------------------------------------------------
// resizing
// ---------------------------------------------------------------------------

/// Bilinear resample with half-pixel-centered sampling; border samples clamp.
inline ImageF resize_bilinear(const ImageF& src, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1)
    throw std::invalid_argument("resize_bilinear: target must be positive");
  ImageF out(out_h, out_w, src.c);
  const double sy = static_cast<double>(src.h) / out_h;
  const double sx = static_cast<double>(src.w) / out_w;
  for (int oy = 0; oy < out_h; ++oy) {
    const double fy = (oy + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    const double wy = fy - y0;
    const int y1 = std::clamp(y0 + 1, 0, src.h - 1);
    y0 = std::clamp(y0, 0, src.h - 1);
    for (int ox = 0; ox < out_w; ++ox) {
      const double fx = (ox + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      const double wx = fx - x0;
      const int x1 = std::clamp(x0 + 1, 0, src.w - 1);
      x0 = std::clamp(x0, 0, src.w - 1);
      for (int ch = 0; ch < src.c; ++ch) {
        const double top = (1.0 - wx) * src.at(y0, x0, ch) + wx * src.at(y0, x1, ch);
        const double bot = (1.0 - wx) * src.at(y1, x0, ch) + wx * src.at(y1, x1, ch);
        out.at(oy, ox, ch) = static_cast<float>((1.0 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

inline ImageF resize_bilinear(const ImageF& src, int target) {
  if (target < 8) throw std::invalid_argument("resize_bilinear: target must be >= 8");
  return resize_bilinear(src, target, target);
}

// ---------------------------------------------------------------------------
// compression proxy
// ---------------------------------------------------------------------------

namespace detail {

/// Orthonormal 8x8 DCT-II basis, row k = basis function k.
inline const std::array<std::array<double, 8>, 8>& dct8_basis() {
  static const auto basis = [] {
    std::array<std::array<double, 8>, 8> m{};
    const double pi = 3.14159265358979323846;
    for (int k = 0; k < 8; ++k) {
      const double a = k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int n = 0; n < 8; ++n)
        m[k][n] = a * std::cos(pi * (2 * n + 1) * k / 16.0);
    }
    return m;
  }();
  return basis;
}

}  // namespace detail

/// Quantizer step for a given qp: doubles every 6 qp.
inline double quant_step(int qp) { return std::pow(2.0, qp / 6.0); }

/// Compression proxy: per-channel 8x8 block DCT, uniform quantization with
/// step 2^(qp/6), inverse transform, clamp. qp=0 passes pixels through
/// untouched. The seed parameter is reserved (the proxy is deterministic).
inline ImageU8 degrade(const ImageU8& img, const CompressionLevel& level,
                       std::uint64_t /*seed*/ = 0) {
  if (img.h < 8 || img.w < 8)
    throw std::invalid_argument("degrade: image dims must be >= 8");
  if (level.qp == 0) return img;

  const double q = quant_step(level.qp);
  const auto& D = detail::dct8_basis();
  const int bh = (img.h + 7) / 8;
  const int bw = (img.w + 7) / 8;
  ImageU8 out(img.h, img.w, img.c);

  double block[8][8], tmp[8][8], coef[8][8];
  for (int ch = 0; ch < img.c; ++ch)
    for (int by = 0; by < bh; ++by)
      for (int bx = 0; bx < bw; ++bx) {
        // Edge blocks replicate the border pixels.
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) {
            const int sy = std::min(by * 8 + y, img.h - 1);
            const int sx = std::min(bx * 8 + x, img.w - 1);
            block[y][x] = static_cast<double>(img.at(sy, sx, ch));
          }
        // coef = D * block * D^T
        for (int k = 0; k < 8; ++k)
          for (int x = 0; x < 8; ++x) {
            double s = 0;
            for (int n = 0; n < 8; ++n) s += D[k][n] * block[n][x];
            tmp[k][x] = s;
          }
        for (int k = 0; k < 8; ++k)
          for (int l = 0; l < 8; ++l) {
            double s = 0;
            for (int n = 0; n < 8; ++n) s += tmp[k][n] * D[l][n];
            coef[k][l] = std::round(s / q) * q;
          }
        // block = D^T * coef * D
        for (int y = 0; y < 8; ++y)
          for (int l = 0; l < 8; ++l) {
            double s = 0;
            for (int k = 0; k < 8; ++k) s += D[k][y] * coef[k][l];
            tmp[y][l] = s;
          }
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) {
            double s = 0;
            for (int l = 0; l < 8; ++l) s += tmp[y][l] * D[l][x];
            const int oy = by * 8 + y, ox = bx * 8 + x;
            if (oy < img.h && ox < img.w) out.at(oy, ox, ch) = clamp_u8(s);
          }
      }
  return out;
}

// ---------------------------------------------------------------------------
// the full pipeline
// ---------------------------------------------------------------------------

/// degrade -> square crop -> grid split -> resize all five -> scale to [0,1].
inline RegionSet make_region_set(const Frame& frame, const FaceBox& box,
                                 const CompressionLevel& level,
                                 const PreprocessConfig& cfg) {
  const ImageU8 degraded = degrade(frame.pixels, level, cfg.degrade_seed);
  const ImageU8 face = square_crop(degraded, box, cfg.margin);
  const auto quadrants = grid_split(face);

  RegionSet rs;
  auto finish = [&cfg](const ImageU8& src) {
    ImageF f = resize_bilinear(to_float(src), cfg.resolution);
    for (auto& v : f.px) v *= (1.0f / 255.0f);
    if (cfg.per_channel_norm) {
      for (int y = 0; y < f.h; ++y)
        for (int x = 0; x < f.w; ++x)
          for (int ch = 0; ch < f.c; ++ch)
            f.at(y, x, ch) =
                (f.at(y, x, ch) - cfg.channel_mean[ch]) / cfg.channel_std[ch];
    }
    return f;
  };
  rs.regions[0] = finish(face);
  for (int i = 0; i < 4; ++i) rs.regions[i + 1] = finish(quadrants[i]);
  return rs;
}

}  // namespace reenact
