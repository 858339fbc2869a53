#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace reenact {

/// Interleaved HWC raster. T is uint8_t for stored frames, float once the
/// pipeline moves to real arithmetic.
template <class T>
struct Image {
  int h = 0;
  int w = 0;
  int c = 0;
  std::vector<T> px;

  Image() = default;
  Image(int h_, int w_, int c_, T fill = T(0))
      : h(h_), w(w_), c(c_), px(static_cast<std::size_t>(h_) * w_ * c_, fill) {}

  T& at(int y, int x, int ch) {
    return px[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }
  const T& at(int y, int x, int ch) const {
    return px[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }
  bool empty() const { return px.empty(); }
};

using ImageU8 = Image<std::uint8_t>;
using ImageF = Image<float>;

inline ImageF to_float(const ImageU8& src) {
  ImageF out(src.h, src.w, src.c);
  for (std::size_t i = 0; i < src.px.size(); ++i)
    out.px[i] = static_cast<float>(src.px[i]);
  return out;
}

inline std::uint8_t clamp_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

/// A single video frame: 8-bit RGB pixels plus provenance.
struct Frame {
  ImageU8 pixels;
  int frame_index = 0;
  std::string video_id;
};

/// Peak signal-to-noise ratio in dB, capped at 100 for identical images.
template <class T>
double psnr(const Image<T>& a, const Image<T>& b, double peak = 255.0) {
  if (a.h != b.h || a.w != b.w || a.c != b.c)
    throw std::invalid_argument("psnr: image shapes differ");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.px.size(); ++i) {
    const double d = static_cast<double>(a.px[i]) - static_cast<double>(b.px[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(a.px.size());
  if (mse <= 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(peak * peak / mse));
}

}  // namespace reenact
