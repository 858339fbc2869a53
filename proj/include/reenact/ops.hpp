#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "reenact/tensor.hpp"
#include "reenact/threading.hpp"

namespace reenact {

namespace detail {

/// Deterministic 8-lane dot product: fixed lane assignment and a fixed
/// combination order, so results do not depend on vector width or threads.
template <class Real>
Real dot_lanes(const Real* a, const Real* b, std::int64_t n) {
  Real lane[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int j = 0; j < 8; ++j) lane[j] += a[i + j] * b[i + j];
  for (int j = 0; i < n; ++i, ++j) lane[j] += a[i] * b[i];
  return ((lane[0] + lane[1]) + (lane[2] + lane[3])) +
         ((lane[4] + lane[5]) + (lane[6] + lane[7]));
}

template <class Real>
Real sum_lanes(const Real* a, std::int64_t n) {
  Real lane[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int j = 0; j < 8; ++j) lane[j] += a[i + j];
  for (int j = 0; i < n; ++i, ++j) lane[j] += a[i];
  return ((lane[0] + lane[1]) + (lane[2] + lane[3])) +
         ((lane[4] + lane[5]) + (lane[6] + lane[7]));
}

inline std::int64_t conv_out_extent(std::int64_t in, std::int64_t k,
                                    std::int64_t pad, std::int64_t stride) {
  return (in + 2 * pad - k) / stride + 1;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

/// Cross-correlation of x [N,C,H,W] with w [F,C,kh,kw] plus bias b [F].
template <class Real>
Tensor<Real> conv2d(const Tensor<Real>& x, const Tensor<Real>& w,
                    const Tensor<Real>& b, int stride = 1, int padding = 0) {
  if (x.ndim() != 4 || w.ndim() != 4)
    throw std::invalid_argument("conv2d: expected 4-d input and weight, got " +
                                shape_str(x.shape()) + " and " +
                                shape_str(w.shape()));
  const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t F = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != C)
    throw std::invalid_argument(
        "conv2d: input has " + std::to_string(C) + " channels but weight expects " +
        std::to_string(w.dim(1)));
  if (b.size() != F)
    throw std::invalid_argument("conv2d: bias length " + std::to_string(b.size()) +
                                " != filter count " + std::to_string(F));
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (padding < 0) throw std::invalid_argument("conv2d: padding must be >= 0");
  if (kh > H + 2 * padding || kw > W + 2 * padding)
    throw std::invalid_argument("conv2d: kernel larger than padded input");

  const std::int64_t Ho = detail::conv_out_extent(H, kh, padding, stride);
  const std::int64_t Wo = detail::conv_out_extent(W, kw, padding, stride);
  const std::int64_t pad = padding, st = stride;

  auto ox_bounds = [pad, st, W, Wo](std::int64_t kx, std::int64_t& lo,
                                    std::int64_t& hi) {
    lo = (pad - kx <= 0) ? 0 : (pad - kx + st - 1) / st;
    const std::int64_t top = W - 1 - kx + pad;
    hi = (top < 0) ? lo : std::min<std::int64_t>(Wo, top / st + 1);
    if (hi < lo) hi = lo;
  };

  auto xn = x.node();
  auto wn = w.node();
  auto bn = b.node();

  Tensor<Real> out = detail::make_op<Real>(
      {N, F, Ho, Wo}, {x, w, b},
      [xn, wn, bn, N, C, H, W, F, kh, kw, Ho, Wo, pad, st,
       ox_bounds](detail::TensorNode<Real>& node) {
        const Real* dy = node.grad.data();
        const Real* xv = xn->value.data();
        const Real* wv = wn->value.data();
        if (bn->requires_grad) {
          Real* db = bn->ensure_grad().data();
          parallel_for(F, [&](std::int64_t f) {
            Real acc = 0;
            for (std::int64_t n = 0; n < N; ++n)
              acc += detail::sum_lanes(dy + ((n * F + f) * Ho) * Wo, Ho * Wo);
            db[f] += acc;
          });
        }
        if (wn->requires_grad) {
          Real* dw = wn->ensure_grad().data();
          parallel_for(F, [&](std::int64_t f) {
            for (std::int64_t c = 0; c < C; ++c)
              for (std::int64_t ky = 0; ky < kh; ++ky)
                for (std::int64_t kx = 0; kx < kw; ++kx) {
                  std::int64_t lo, hi;
                  ox_bounds(kx, lo, hi);
                  Real acc = 0;
                  for (std::int64_t n = 0; n < N; ++n) {
                    const Real* dy_nf = dy + (n * F + f) * Ho * Wo;
                    const Real* x_nc = xv + (n * C + c) * H * W;
                    for (std::int64_t oy = 0; oy < Ho; ++oy) {
                      const std::int64_t iy = oy * st - pad + ky;
                      if (iy < 0 || iy >= H) continue;
                      const Real* dyrow = dy_nf + oy * Wo;
                      const Real* xrow = x_nc + iy * W;
                      if (st == 1) {
                        acc += detail::dot_lanes(dyrow + lo,
                                                 xrow + (lo - pad + kx), hi - lo);
                      } else {
                        for (std::int64_t ox = lo; ox < hi; ++ox)
                          acc += dyrow[ox] * xrow[ox * st - pad + kx];
                      }
                    }
                  }
                  dw[((f * C + c) * kh + ky) * kw + kx] += acc;
                }
          });
        }
        if (xn->requires_grad) {
          Real* dx = xn->ensure_grad().data();
          parallel_for(N, [&](std::int64_t n) {
            for (std::int64_t f = 0; f < F; ++f) {
              const Real* dy_nf = dy + (n * F + f) * Ho * Wo;
              for (std::int64_t c = 0; c < C; ++c) {
                Real* dx_nc = dx + (n * C + c) * H * W;
                const Real* w_fc = wv + (f * C + c) * kh * kw;
                for (std::int64_t ky = 0; ky < kh; ++ky)
                  for (std::int64_t kx = 0; kx < kw; ++kx) {
                    const Real wgt = w_fc[ky * kw + kx];
                    std::int64_t lo, hi;
                    ox_bounds(kx, lo, hi);
                    for (std::int64_t oy = 0; oy < Ho; ++oy) {
                      const std::int64_t iy = oy * st - pad + ky;
                      if (iy < 0 || iy >= H) continue;
                      const Real* dyrow = dy_nf + oy * Wo;
                      Real* dxrow = dx_nc + iy * W;
                      if (st == 1) {
                        Real* dst = dxrow + (lo - pad + kx);
                        for (std::int64_t ox = lo; ox < hi; ++ox)
                          dst[ox - lo] += wgt * dyrow[ox];
                      } else {
                        for (std::int64_t ox = lo; ox < hi; ++ox)
                          dxrow[ox * st - pad + kx] += wgt * dyrow[ox];
                      }
                    }
                  }
              }
            }
          });
        }
      });

  // Forward kernel: each (n,f) plane is written by exactly one task.
  Real* ov = out.data();
  const Real* xv = x.data();
  const Real* wv = w.data();
  const Real* bv = b.data();
  parallel_for(N * F, [&](std::int64_t nf) {
    const std::int64_t n = nf / F, f = nf % F;
    Real* out_nf = ov + nf * Ho * Wo;
    std::fill(out_nf, out_nf + Ho * Wo, bv[f]);
    for (std::int64_t c = 0; c < C; ++c) {
      const Real* x_nc = xv + (n * C + c) * H * W;
      const Real* w_fc = wv + (f * C + c) * kh * kw;
      for (std::int64_t ky = 0; ky < kh; ++ky)
        for (std::int64_t kx = 0; kx < kw; ++kx) {
          const Real wgt = w_fc[ky * kw + kx];
          std::int64_t lo, hi;
          ox_bounds(kx, lo, hi);
          for (std::int64_t oy = 0; oy < Ho; ++oy) {
            const std::int64_t iy = oy * st - pad + ky;
            if (iy < 0 || iy >= H) continue;
            const Real* xrow = x_nc + iy * W;
            Real* orow = out_nf + oy * Wo;
            if (st == 1) {
              const Real* src = xrow + (lo - pad + kx);
              for (std::int64_t ox = lo; ox < hi; ++ox)
                orow[ox] += wgt * src[ox - lo];
            } else {
              for (std::int64_t ox = lo; ox < hi; ++ox)
                orow[ox] += wgt * xrow[ox * st - pad + kx];
            }
          }
        }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// batch normalization
// ---------------------------------------------------------------------------

/// Per-channel running statistics owned by a BatchNorm layer.
template <class Real>
struct BatchNormStats {
  std::vector<Real> mean;
  std::vector<Real> var;

  explicit BatchNormStats(std::int64_t channels = 0)
      : mean(channels, Real(0)), var(channels, Real(1)) {}
};

/// x [N,C,H,W], gamma/beta [C]. Train mode normalizes by batch statistics
/// (biased variance) and updates running stats; eval mode uses running stats
/// and leaves them untouched.
template <class Real>
Tensor<Real> batch_norm2d(const Tensor<Real>& x, const Tensor<Real>& gamma,
                          const Tensor<Real>& beta, BatchNormStats<Real>& stats,
                          bool training, Real momentum = Real(0.1),
                          Real eps = Real(1e-5)) {
  if (x.ndim() != 4)
    throw std::invalid_argument("batch_norm2d: expected 4-d input, got " +
                                shape_str(x.shape()));
  const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (gamma.size() != C || beta.size() != C ||
      static_cast<std::int64_t>(stats.mean.size()) != C ||
      static_cast<std::int64_t>(stats.var.size()) != C)
    throw std::invalid_argument(
        "batch_norm2d: per-channel parameter length != channel count " +
        std::to_string(C));

  const std::int64_t plane = H * W;
  const std::int64_t m = N * plane;  // elements per channel

  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();

  // invstd and xhat are shared with the backward closure.
  auto invstd = std::make_shared<std::vector<Real>>(C);
  auto xhat = std::make_shared<std::vector<Real>>();
  xhat->resize(static_cast<std::size_t>(x.size()));

  const Real* xv = x.data();
  std::vector<Real> ch_mean(C), ch_var(C);
  if (training) {
    parallel_for(C, [&](std::int64_t c) {
      Real acc = 0;
      for (std::int64_t n = 0; n < N; ++n)
        acc += detail::sum_lanes(xv + (n * C + c) * plane, plane);
      const Real mean = acc / static_cast<Real>(m);
      Real vacc = 0;
      for (std::int64_t n = 0; n < N; ++n) {
        const Real* p = xv + (n * C + c) * plane;
        Real lane[8] = {0, 0, 0, 0, 0, 0, 0, 0};
        std::int64_t i = 0;
        for (; i + 8 <= plane; i += 8)
          for (int j = 0; j < 8; ++j) {
            const Real d = p[i + j] - mean;
            lane[j] += d * d;
          }
        for (int j = 0; i < plane; ++i, ++j) {
          const Real d = p[i] - mean;
          lane[j] += d * d;
        }
        vacc += ((lane[0] + lane[1]) + (lane[2] + lane[3])) +
                ((lane[4] + lane[5]) + (lane[6] + lane[7]));
      }
      ch_mean[c] = mean;
      ch_var[c] = vacc / static_cast<Real>(m);
    });
    for (std::int64_t c = 0; c < C; ++c) {
      const Real unbiased =
          m > 1 ? ch_var[c] * static_cast<Real>(m) / static_cast<Real>(m - 1)
                : ch_var[c];
      stats.mean[c] = (Real(1) - momentum) * stats.mean[c] + momentum * ch_mean[c];
      stats.var[c] = (Real(1) - momentum) * stats.var[c] + momentum * unbiased;
    }
  } else {
    for (std::int64_t c = 0; c < C; ++c) {
      ch_mean[c] = stats.mean[c];
      ch_var[c] = stats.var[c];
    }
  }
  for (std::int64_t c = 0; c < C; ++c)
    (*invstd)[c] = Real(1) / std::sqrt(ch_var[c] + eps);

  Tensor<Real> out = detail::make_op<Real>(
      x.shape(), {x, gamma, beta},
      [xn, gn, bn, invstd, xhat, N, C, plane, m,
       training](detail::TensorNode<Real>& node) {
        const Real* dy = node.grad.data();
        const Real* xh = xhat->data();
        // Per-channel reductions, each channel owned by one task.
        std::vector<Real> sum_dy(C), sum_dy_xhat(C);
        parallel_for(C, [&](std::int64_t c) {
          Real s = 0, sx = 0;
          for (std::int64_t n = 0; n < N; ++n) {
            const std::int64_t base = (n * C + c) * plane;
            s += detail::sum_lanes(dy + base, plane);
            sx += detail::dot_lanes(dy + base, xh + base, plane);
          }
          sum_dy[c] = s;
          sum_dy_xhat[c] = sx;
        });
        if (gn->requires_grad) {
          Real* dg = gn->ensure_grad().data();
          for (std::int64_t c = 0; c < C; ++c) dg[c] += sum_dy_xhat[c];
        }
        if (bn->requires_grad) {
          Real* db = bn->ensure_grad().data();
          for (std::int64_t c = 0; c < C; ++c) db[c] += sum_dy[c];
        }
        if (xn->requires_grad) {
          Real* dx = xn->ensure_grad().data();
          const Real* g = gn->value.data();
          parallel_for(C, [&](std::int64_t c) {
            const Real k = g[c] * (*invstd)[c];
            if (training) {
              const Real inv_m = Real(1) / static_cast<Real>(m);
              for (std::int64_t n = 0; n < N; ++n) {
                const std::int64_t base = (n * C + c) * plane;
                for (std::int64_t i = 0; i < plane; ++i)
                  dx[base + i] += k * (dy[base + i] -
                                       inv_m * (sum_dy[c] +
                                                xh[base + i] * sum_dy_xhat[c]));
              }
            } else {
              for (std::int64_t n = 0; n < N; ++n) {
                const std::int64_t base = (n * C + c) * plane;
                for (std::int64_t i = 0; i < plane; ++i)
                  dx[base + i] += k * dy[base + i];
              }
            }
          });
        }
      });

  Real* ov = out.data();
  Real* xhv = xhat->data();
  const Real* gv = gamma.data();
  const Real* bv = beta.data();
  parallel_for(C, [&](std::int64_t c) {
    const Real mean = ch_mean[c], is = (*invstd)[c];
    const Real g = gv[c], bb = bv[c];
    for (std::int64_t n = 0; n < N; ++n) {
      const std::int64_t base = (n * C + c) * plane;
      for (std::int64_t i = 0; i < plane; ++i) {
        const Real h = (xv[base + i] - mean) * is;
        xhv[base + i] = h;
        ov[base + i] = g * h + bb;
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// elementwise and shape ops
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> relu(const Tensor<Real>& x) {
  auto xn = x.node();
  Tensor<Real> out = detail::make_op<Real>(
      x.shape(), {x}, [xn](detail::TensorNode<Real>& node) {
        if (!xn->requires_grad) return;
        Real* dx = xn->ensure_grad().data();
        const Real* dy = node.grad.data();
        const Real* xv = xn->value.data();
        const std::int64_t n = static_cast<std::int64_t>(xn->value.size());
        for (std::int64_t i = 0; i < n; ++i)
          if (xv[i] > Real(0)) dx[i] += dy[i];
      });
  const Real* xv = x.data();
  Real* ov = out.data();
  for (std::int64_t i = 0; i < x.size(); ++i)
    ov[i] = xv[i] > Real(0) ? xv[i] : Real(0);
  return out;
}

template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  auto an = a.node();
  auto bn = b.node();
  Tensor<Real> out = detail::make_op<Real>(
      a.shape(), {a, b}, [an, bn](detail::TensorNode<Real>& node) {
        const Real* dy = node.grad.data();
        const std::int64_t n = static_cast<std::int64_t>(node.value.size());
        if (an->requires_grad) {
          Real* da = an->ensure_grad().data();
          for (std::int64_t i = 0; i < n; ++i) da[i] += dy[i];
        }
        if (bn->requires_grad) {
          Real* db = bn->ensure_grad().data();
          for (std::int64_t i = 0; i < n; ++i) db[i] += dy[i];
        }
      });
  const Real* av = a.data();
  const Real* bv = b.data();
  Real* ov = out.data();
  for (std::int64_t i = 0; i < a.size(); ++i) ov[i] = av[i] + bv[i];
  return out;
}

template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("mul: shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  auto an = a.node();
  auto bn = b.node();
  Tensor<Real> out = detail::make_op<Real>(
      a.shape(), {a, b}, [an, bn](detail::TensorNode<Real>& node) {
        const Real* dy = node.grad.data();
        const std::int64_t n = static_cast<std::int64_t>(node.value.size());
        if (an->requires_grad) {
          Real* da = an->ensure_grad().data();
          const Real* bv = bn->value.data();
          for (std::int64_t i = 0; i < n; ++i) da[i] += dy[i] * bv[i];
        }
        if (bn->requires_grad) {
          Real* db = bn->ensure_grad().data();
          const Real* av = an->value.data();
          for (std::int64_t i = 0; i < n; ++i) db[i] += dy[i] * av[i];
        }
      });
  const Real* av = a.data();
  const Real* bv = b.data();
  Real* ov = out.data();
  for (std::int64_t i = 0; i < a.size(); ++i) ov[i] = av[i] * bv[i];
  return out;
}

template <class Real>
Tensor<Real> scale(const Tensor<Real>& a, Real s) {
  auto an = a.node();
  Tensor<Real> out = detail::make_op<Real>(
      a.shape(), {a}, [an, s](detail::TensorNode<Real>& node) {
        if (!an->requires_grad) return;
        Real* da = an->ensure_grad().data();
        const Real* dy = node.grad.data();
        const std::int64_t n = static_cast<std::int64_t>(node.value.size());
        for (std::int64_t i = 0; i < n; ++i) da[i] += s * dy[i];
      });
  const Real* av = a.data();
  Real* ov = out.data();
  for (std::int64_t i = 0; i < a.size(); ++i) ov[i] = s * av[i];
  return out;
}

template <class Real>
Tensor<Real> sum(const Tensor<Real>& x) {
  auto xn = x.node();
  Tensor<Real> out = detail::make_op<Real>(
      {1}, {x}, [xn](detail::TensorNode<Real>& node) {
        if (!xn->requires_grad) return;
        Real* dx = xn->ensure_grad().data();
        const Real g = node.grad[0];
        const std::int64_t n = static_cast<std::int64_t>(xn->value.size());
        for (std::int64_t i = 0; i < n; ++i) dx[i] += g;
      });
  out.data()[0] = detail::sum_lanes(x.data(), x.size());
  return out;
}

/// Concatenates [N,d_i] blocks along columns into [N, sum d_i].
template <class Real>
Tensor<Real> concat_cols(const std::vector<Tensor<Real>>& parts) {
  if (parts.empty())
    throw std::invalid_argument("concat_cols: no tensors given");
  const std::int64_t N = parts[0].dim(0);
  std::int64_t D = 0;
  for (const auto& p : parts) {
    if (p.ndim() != 2 || p.dim(0) != N)
      throw std::invalid_argument("concat_cols: parts must be [N,d] with equal N");
    D += p.dim(1);
  }
  std::vector<std::shared_ptr<detail::TensorNode<Real>>> nodes;
  std::vector<std::int64_t> widths;
  for (const auto& p : parts) {
    nodes.push_back(p.node());
    widths.push_back(p.dim(1));
  }
  Tensor<Real> out = detail::make_op<Real>(
      {N, D}, parts, [nodes, widths, N, D](detail::TensorNode<Real>& node) {
        const Real* dy = node.grad.data();
        std::int64_t col = 0;
        for (std::size_t k = 0; k < nodes.size(); ++k) {
          const std::int64_t d = widths[k];
          if (nodes[k]->requires_grad) {
            Real* dp = nodes[k]->ensure_grad().data();
            for (std::int64_t n = 0; n < N; ++n)
              for (std::int64_t j = 0; j < d; ++j)
                dp[n * d + j] += dy[n * D + col + j];
          }
          col += d;
        }
      });
  Real* ov = out.data();
  std::int64_t col = 0;
  for (const auto& p : parts) {
    const std::int64_t d = p.dim(1);
    const Real* pv = p.data();
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t j = 0; j < d; ++j) ov[n * D + col + j] = pv[n * d + j];
    col += d;
  }
  return out;
}

// ---------------------------------------------------------------------------
// pooling
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> max_pool2d(const Tensor<Real>& x, int k = 2, int s = 2) {
  if (x.ndim() != 4)
    throw std::invalid_argument("max_pool2d: expected 4-d input, got " +
                                shape_str(x.shape()));
  if (k < 1 || s < 1) throw std::invalid_argument("max_pool2d: k,s must be >= 1");
  const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H < k || W < k)
    throw std::invalid_argument("max_pool2d: spatial dims " + shape_str(x.shape()) +
                                " smaller than window " + std::to_string(k));
  const std::int64_t Ho = (H - k) / s + 1;
  const std::int64_t Wo = (W - k) / s + 1;

  // First maximum wins ties; indices are kept for the backward pass.
  auto argmax = std::make_shared<std::vector<std::int64_t>>(
      static_cast<std::size_t>(N * C * Ho * Wo));
  auto xn = x.node();

  Tensor<Real> out = detail::make_op<Real>(
      {N, C, Ho, Wo}, {x},
      [xn, argmax, N, C, H, W, Ho, Wo](detail::TensorNode<Real>& node) {
        if (!xn->requires_grad) return;
        Real* dx = xn->ensure_grad().data();
        const Real* dy = node.grad.data();
        const std::int64_t planes = N * C;
        parallel_for(planes, [&](std::int64_t nc) {
          const std::int64_t out_base = nc * Ho * Wo;
          const std::int64_t in_base = nc * H * W;
          for (std::int64_t i = 0; i < Ho * Wo; ++i)
            dx[in_base + (*argmax)[out_base + i]] += dy[out_base + i];
        });
      });

  const Real* xv = x.data();
  Real* ov = out.data();
  parallel_for(N * C, [&](std::int64_t nc) {
    const Real* plane = xv + nc * H * W;
    Real* oplane = ov + nc * Ho * Wo;
    std::int64_t* am = argmax->data() + nc * Ho * Wo;
    for (std::int64_t oy = 0; oy < Ho; ++oy)
      for (std::int64_t ox = 0; ox < Wo; ++ox) {
        const std::int64_t y0 = oy * s, x0 = ox * s;
        Real best = plane[y0 * W + x0];
        std::int64_t best_i = y0 * W + x0;
        for (std::int64_t dy_ = 0; dy_ < k; ++dy_)
          for (std::int64_t dx_ = 0; dx_ < k; ++dx_) {
            const std::int64_t idx = (y0 + dy_) * W + (x0 + dx_);
            if (plane[idx] > best) {
              best = plane[idx];
              best_i = idx;
            }
          }
        oplane[oy * Wo + ox] = best;
        am[oy * Wo + ox] = best_i;
      }
  });
  return out;
}

/// Spatial mean: [N,C,H,W] -> [N,C].
template <class Real>
Tensor<Real> global_avg_pool(const Tensor<Real>& x) {
  if (x.ndim() != 4)
    throw std::invalid_argument("global_avg_pool: expected 4-d input, got " +
                                shape_str(x.shape()));
  const std::int64_t N = x.dim(0), C = x.dim(1), plane = x.dim(2) * x.dim(3);
  auto xn = x.node();
  Tensor<Real> out = detail::make_op<Real>(
      {N, C}, {x}, [xn, N, C, plane](detail::TensorNode<Real>& node) {
        if (!xn->requires_grad) return;
        Real* dx = xn->ensure_grad().data();
        const Real* dy = node.grad.data();
        const Real inv = Real(1) / static_cast<Real>(plane);
        for (std::int64_t nc = 0; nc < N * C; ++nc) {
          const Real g = dy[nc] * inv;
          Real* p = dx + nc * plane;
          for (std::int64_t i = 0; i < plane; ++i) p[i] += g;
        }
      });
  const Real* xv = x.data();
  Real* ov = out.data();
  for (std::int64_t nc = 0; nc < N * C; ++nc)
    ov[nc] = detail::sum_lanes(xv + nc * plane, plane) / static_cast<Real>(plane);
  return out;
}

// ---------------------------------------------------------------------------
// linear / softmax / cross-entropy
// ---------------------------------------------------------------------------

/// Affine map: x [N,D] with w [O,D], b [O] -> [N,O].
template <class Real>
Tensor<Real> linear(const Tensor<Real>& x, const Tensor<Real>& w,
                    const Tensor<Real>& b) {
  if (x.ndim() != 2 || w.ndim() != 2)
    throw std::invalid_argument("linear: expected 2-d input and weight");
  const std::int64_t N = x.dim(0), D = x.dim(1), O = w.dim(0);
  if (w.dim(1) != D)
    throw std::invalid_argument("linear: input features " + std::to_string(D) +
                                " != weight features " + std::to_string(w.dim(1)));
  if (b.size() != O)
    throw std::invalid_argument("linear: bias length mismatch");

  auto xn = x.node();
  auto wn = w.node();
  auto bn = b.node();
  Tensor<Real> out = detail::make_op<Real>(
      {N, O}, {x, w, b}, [xn, wn, bn, N, D, O](detail::TensorNode<Real>& node) {
        const Real* dy = node.grad.data();
        if (bn->requires_grad) {
          Real* db = bn->ensure_grad().data();
          for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t o = 0; o < O; ++o) db[o] += dy[n * O + o];
        }
        if (wn->requires_grad) {
          Real* dw = wn->ensure_grad().data();
          const Real* xv = xn->value.data();
          for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t o = 0; o < O; ++o) {
              const Real g = dy[n * O + o];
              const Real* xrow = xv + n * D;
              Real* wrow = dw + o * D;
              for (std::int64_t d = 0; d < D; ++d) wrow[d] += g * xrow[d];
            }
        }
        if (xn->requires_grad) {
          Real* dx = xn->ensure_grad().data();
          const Real* wv = wn->value.data();
          for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t o = 0; o < O; ++o) {
              const Real g = dy[n * O + o];
              const Real* wrow = wv + o * D;
              Real* xrow = dx + n * D;
              for (std::int64_t d = 0; d < D; ++d) xrow[d] += g * wrow[d];
            }
        }
      });
  const Real* xv = x.data();
  const Real* wv = w.data();
  const Real* bv = b.data();
  Real* ov = out.data();
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t o = 0; o < O; ++o)
      ov[n * O + o] = bv[o] + detail::dot_lanes(xv + n * D, wv + o * D, D);
  return out;
}

/// Row-wise softmax over the last dimension, stabilized by max subtraction.
template <class Real>
Tensor<Real> softmax(const Tensor<Real>& x) {
  if (x.ndim() < 1)
    throw std::invalid_argument("softmax: expected at least 1-d input");
  const std::int64_t K = x.dim(x.ndim() - 1);
  const std::int64_t rows = x.size() / K;
  auto xn = x.node();
  Tensor<Real> out = detail::make_op<Real>(
      x.shape(), {x}, [xn, rows, K](detail::TensorNode<Real>& node) {
        if (!xn->requires_grad) return;
        Real* dx = xn->ensure_grad().data();
        const Real* dy = node.grad.data();
        const Real* y = node.value.data();
        for (std::int64_t r = 0; r < rows; ++r) {
          const Real* yr = y + r * K;
          const Real* dyr = dy + r * K;
          Real dot = 0;
          for (std::int64_t k = 0; k < K; ++k) dot += dyr[k] * yr[k];
          Real* dxr = dx + r * K;
          for (std::int64_t k = 0; k < K; ++k)
            dxr[k] += yr[k] * (dyr[k] - dot);
        }
      });
  const Real* xv = x.data();
  Real* ov = out.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const Real* xr = xv + r * K;
    Real* yr = ov + r * K;
    Real mx = xr[0];
    for (std::int64_t k = 1; k < K; ++k) mx = std::max(mx, xr[k]);
    Real denom = 0;
    for (std::int64_t k = 0; k < K; ++k) {
      yr[k] = std::exp(xr[k] - mx);
      denom += yr[k];
    }
    for (std::int64_t k = 0; k < K; ++k) yr[k] /= denom;
  }
  return out;
}

/// Mean cross-entropy of logits [N,K] against integer labels, with the
/// predicted probability clamped at 1e-12 before the log.
template <class Real>
Tensor<Real> cross_entropy_mean(const Tensor<Real>& logits,
                                const std::vector<int>& labels) {
  if (logits.ndim() != 2)
    throw std::invalid_argument("cross_entropy_mean: expected [N,K] logits");
  const std::int64_t N = logits.dim(0), K = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != N)
    throw std::invalid_argument("cross_entropy_mean: label count mismatch");
  for (int y : labels)
    if (y < 0 || y >= K)
      throw std::invalid_argument("cross_entropy_mean: label out of range");

  auto ln = logits.node();
  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  Tensor<Real> out = detail::make_op<Real>(
      {1}, {logits}, [ln, labels_copy, N, K](detail::TensorNode<Real>& node) {
        if (!ln->requires_grad) return;
        Real* dl = ln->ensure_grad().data();
        const Real g = node.grad[0] / static_cast<Real>(N);
        const Real* lv = ln->value.data();
        for (std::int64_t n = 0; n < N; ++n) {
          const Real* row = lv + n * K;
          Real mx = row[0];
          for (std::int64_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
          Real denom = 0;
          for (std::int64_t k = 0; k < K; ++k) denom += std::exp(row[k] - mx);
          const int y = (*labels_copy)[n];
          for (std::int64_t k = 0; k < K; ++k) {
            const Real p = std::exp(row[k] - mx) / denom;
            dl[n * K + k] += g * (p - (k == y ? Real(1) : Real(0)));
          }
        }
      });

  const Real* lv = logits.data();
  Real total = 0;
  for (std::int64_t n = 0; n < N; ++n) {
    const Real* row = lv + n * K;
    Real mx = row[0];
    for (std::int64_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    Real denom = 0;
    for (std::int64_t k = 0; k < K; ++k) denom += std::exp(row[k] - mx);
    const Real p = std::exp(row[labels[n]] - mx) / denom;
    total += -std::log(std::max(p, Real(1e-12)));
  }
  out.data()[0] = total / static_cast<Real>(N);
  return out;
}

}  // namespace reenact
