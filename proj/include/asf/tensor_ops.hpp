/*
 * Copyright 2026 The asf Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "asf/common.hpp"
#include "asf/rng.hpp"
#include "asf/tensor.hpp"

namespace asf {

// ---------------------------------------------------------------------------
// Small matmul kernels (row-major). These back every convolution and linear
// layer; loops are ordered so the compiler vectorizes the innermost axpy/dot.
// Each output element is reduced sequentially, so results are bit-stable
// regardless of blocking.
// ---------------------------------------------------------------------------

namespace detail {

constexpr std::int64_t kMatmulColBlock = 512;

// C[M x N] += A[M x K] * B[K x N]
template <typename R>
void matmul_acc(const R* a, const R* b, R* c, std::int64_t m, std::int64_t k,
                std::int64_t n) {
  for (std::int64_t nb = 0; nb < n; nb += kMatmulColBlock) {
    const std::int64_t nw = std::min(kMatmulColBlock, n - nb);
    std::int64_t i = 0;
    for (; i + 4 <= m; i += 4) {
      R* c0 = c + (i + 0) * n + nb;
      R* c1 = c + (i + 1) * n + nb;
      R* c2 = c + (i + 2) * n + nb;
      R* c3 = c + (i + 3) * n + nb;
      for (std::int64_t p = 0; p < k; ++p) {
        const R* bp = b + p * n + nb;
        const R a0 = a[(i + 0) * k + p];
        const R a1 = a[(i + 1) * k + p];
        const R a2 = a[(i + 2) * k + p];
        const R a3 = a[(i + 3) * k + p];
        for (std::int64_t j = 0; j < nw; ++j) {
          c0[j] += a0 * bp[j];
          c1[j] += a1 * bp[j];
          c2[j] += a2 * bp[j];
          c3[j] += a3 * bp[j];
        }
      }
    }
    for (; i < m; ++i) {
      R* ci = c + i * n + nb;
      for (std::int64_t p = 0; p < k; ++p) {
        const R* bp = b + p * n + nb;
        const R ai = a[i * k + p];
        for (std::int64_t j = 0; j < nw; ++j) ci[j] += ai * bp[j];
      }
    }
  }
}

// C[M x N] += A[M x K] * B[N x K]^T. B is transposed into scratch first so
// the inner loops stay in the vectorizable axpy form.
template <typename R>
void matmul_abt_acc(const R* a, const R* b, R* c, std::int64_t m,
                    std::int64_t k, std::int64_t n) {
  std::vector<R> bt(static_cast<std::size_t>(k * n));
  for (std::int64_t j = 0; j < n; ++j) {
    const R* bj = b + j * k;
    for (std::int64_t p = 0; p < k; ++p) bt[p * n + j] = bj[p];
  }
  matmul_acc(a, bt.data(), c, m, k, n);
}

// C[M x N] += A[K x M]^T * B[K x N]
template <typename R>
void matmul_atb_acc(const R* a, const R* b, R* c, std::int64_t m,
                    std::int64_t k, std::int64_t n) {
  for (std::int64_t nb = 0; nb < n; nb += kMatmulColBlock) {
    const std::int64_t nw = std::min(kMatmulColBlock, n - nb);
    std::int64_t i = 0;
    for (; i + 4 <= m; i += 4) {
      R* c0 = c + (i + 0) * n + nb;
      R* c1 = c + (i + 1) * n + nb;
      R* c2 = c + (i + 2) * n + nb;
      R* c3 = c + (i + 3) * n + nb;
      for (std::int64_t p = 0; p < k; ++p) {
        const R* bp = b + p * n + nb;
        const R a0 = a[p * m + i + 0];
        const R a1 = a[p * m + i + 1];
        const R a2 = a[p * m + i + 2];
        const R a3 = a[p * m + i + 3];
        for (std::int64_t j = 0; j < nw; ++j) {
          c0[j] += a0 * bp[j];
          c1[j] += a1 * bp[j];
          c2[j] += a2 * bp[j];
          c3[j] += a3 * bp[j];
        }
      }
    }
    for (; i < m; ++i) {
      R* ci = c + i * n + nb;
      for (std::int64_t p = 0; p < k; ++p) {
        const R* bp = b + p * n + nb;
        const R ai = a[p * m + i];
        for (std::int64_t j = 0; j < nw; ++j) ci[j] += ai * bp[j];
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution (cross-correlation over time x frequency)
// ---------------------------------------------------------------------------

struct Conv2dSpec {
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  int kt = 1, kf = 1;              // kernel extents, time x frequency
  int stride_t = 1, stride_f = 1;
  int pad_t = 0, pad_f = 0;
  bool has_bias = false;
};

inline std::int64_t conv_out_extent(std::int64_t in, int k, int stride,
                                    int pad) {
  const std::int64_t span = in + 2 * static_cast<std::int64_t>(pad) - k;
  check(span >= 0 && stride >= 1,
        "non-positive convolution output extent (in=", in, " k=", k,
        " stride=", stride, " pad=", pad, ")");
  return span / stride + 1;
}

/// Convolution parameters: weight is [out, in, kt, kf], bias (optional) [out].
template <typename R>
struct Conv2dLayer {
  Conv2dSpec spec;
  Tensor<R> weight;
  Tensor<R> bias;  // numel 0 when spec.has_bias is false

  static Conv2dLayer make(Conv2dSpec s) {
    Conv2dLayer l;
    l.spec = s;
    l.weight = Tensor<R>({s.out_channels, s.in_channels, s.kt, s.kf});
    if (s.has_bias) l.bias = Tensor<R>({s.out_channels});
    return l;
  }

  std::int64_t param_count() const {
    return weight.numel() + bias.numel();
  }
};

namespace detail {

// Expand one sample [C x T x F] into a [C*kt*kf x OT*OF] patch matrix.
template <typename R>
void im2col(const R* x, std::int64_t c_in, std::int64_t t_in, std::int64_t f_in,
            const Conv2dSpec& s, std::int64_t t_out, std::int64_t f_out,
            R* col) {
  const std::int64_t p_total = t_out * f_out;
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < c_in; ++c) {
    const R* xc = x + c * t_in * f_in;
    for (int i = 0; i < s.kt; ++i) {
      for (int j = 0; j < s.kf; ++j, ++row) {
        R* dst = col + row * p_total;
        for (std::int64_t ot = 0; ot < t_out; ++ot) {
          const std::int64_t it = ot * s.stride_t - s.pad_t + i;
          R* drow = dst + ot * f_out;
          if (it < 0 || it >= t_in) {
            std::fill(drow, drow + f_out, R(0));
            continue;
          }
          const R* xrow = xc + it * f_in;
          for (std::int64_t of = 0; of < f_out; ++of) {
            const std::int64_t jf = of * s.stride_f - s.pad_f + j;
            drow[of] = (jf >= 0 && jf < f_in) ? xrow[jf] : R(0);
          }
        }
      }
    }
  }
}

// Scatter-add of a patch matrix back onto the input layout.
template <typename R>
void col2im_acc(const R* col, std::int64_t c_in, std::int64_t t_in,
                std::int64_t f_in, const Conv2dSpec& s, std::int64_t t_out,
                std::int64_t f_out, R* x) {
  const std::int64_t p_total = t_out * f_out;
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < c_in; ++c) {
    R* xc = x + c * t_in * f_in;
    for (int i = 0; i < s.kt; ++i) {
      for (int j = 0; j < s.kf; ++j, ++row) {
        const R* src = col + row * p_total;
        for (std::int64_t ot = 0; ot < t_out; ++ot) {
          const std::int64_t it = ot * s.stride_t - s.pad_t + i;
          if (it < 0 || it >= t_in) continue;
          R* xrow = xc + it * f_in;
          const R* srow = src + ot * f_out;
          for (std::int64_t of = 0; of < f_out; ++of) {
            const std::int64_t jf = of * s.stride_f - s.pad_f + j;
            if (jf >= 0 && jf < f_in) xrow[jf] += srow[of];
          }
        }
      }
    }
  }
}

inline bool is_pointwise(const Conv2dSpec& s) {
  return s.kt == 1 && s.kf == 1 && s.stride_t == 1 && s.stride_f == 1 &&
         s.pad_t == 0 && s.pad_f == 0;
}

}  // namespace detail

template <typename R>
Tensor<R> conv2d_forward(const Tensor<R>& x, const Conv2dLayer<R>& layer) {
  const Conv2dSpec& s = layer.spec;
  check(x.rank() == 4, "conv2d: input must be N x C x T x F");
  check(x.dim(1) == s.in_channels, "conv2d: input has ", x.dim(1),
        " channels, layer expects ", s.in_channels);
  const std::int64_t n = x.dim(0), t_in = x.dim(2), f_in = x.dim(3);
  const std::int64_t t_out = conv_out_extent(t_in, s.kt, s.stride_t, s.pad_t);
  const std::int64_t f_out = conv_out_extent(f_in, s.kf, s.stride_f, s.pad_f);
  const std::int64_t k = s.in_channels * s.kt * s.kf;
  const std::int64_t p = t_out * f_out;

  Tensor<R> y({n, s.out_channels, t_out, f_out});
  const bool pointwise = detail::is_pointwise(s);
  std::vector<R> col;
  if (!pointwise) col.resize(static_cast<std::size_t>(k * p));

  for (std::int64_t b = 0; b < n; ++b) {
    const R* xb = x.data.data() + b * s.in_channels * t_in * f_in;
    const R* patches = xb;
    if (!pointwise) {
      detail::im2col(xb, s.in_channels, t_in, f_in, s, t_out, f_out,
                     col.data());
      patches = col.data();
    }
    R* yb = y.data.data() + b * s.out_channels * p;
    detail::matmul_acc(layer.weight.data.data(), patches, yb, s.out_channels,
                       k, p);
    if (s.has_bias) {
      for (std::int64_t oc = 0; oc < s.out_channels; ++oc) {
        const R bv = layer.bias.data[static_cast<std::size_t>(oc)];
        R* row = yb + oc * p;
        for (std::int64_t q = 0; q < p; ++q) row[q] += bv;
      }
    }
  }
  return y;
}

/// Exact gradients of conv2d_forward. Any of the grad outputs may be null;
/// non-null weight/bias grads are accumulated into (callers zero them).
template <typename R>
void conv2d_backward(const Tensor<R>& grad_out, const Tensor<R>& x,
                     const Conv2dLayer<R>& layer, Tensor<R>* grad_x,
                     Tensor<R>* grad_w, Tensor<R>* grad_b) {
  const Conv2dSpec& s = layer.spec;
  const std::int64_t n = x.dim(0), t_in = x.dim(2), f_in = x.dim(3);
  const std::int64_t t_out = conv_out_extent(t_in, s.kt, s.stride_t, s.pad_t);
  const std::int64_t f_out = conv_out_extent(f_in, s.kf, s.stride_f, s.pad_f);
  check_shape(grad_out, {n, s.out_channels, t_out, f_out}, "conv2d_backward");

  const std::int64_t k = s.in_channels * s.kt * s.kf;
  const std::int64_t p = t_out * f_out;
  const bool pointwise = detail::is_pointwise(s);

  if (grad_x && grad_x->shape != x.shape) *grad_x = Tensor<R>(x.shape);
  std::vector<R> col, gcol;
  if (!pointwise) {
    if (grad_w) col.resize(static_cast<std::size_t>(k * p));
    if (grad_x) gcol.resize(static_cast<std::size_t>(k * p));
  }

  for (std::int64_t b = 0; b < n; ++b) {
    const R* xb = x.data.data() + b * s.in_channels * t_in * f_in;
    const R* gyb = grad_out.data.data() + b * s.out_channels * p;

    if (grad_w) {
      const R* patches = xb;
      if (!pointwise) {
        detail::im2col(xb, s.in_channels, t_in, f_in, s, t_out, f_out,
                       col.data());
        patches = col.data();
      }
      detail::matmul_abt_acc(gyb, patches, grad_w->data.data(), s.out_channels,
                             p, k);
    }
    if (grad_b && s.has_bias) {
      for (std::int64_t oc = 0; oc < s.out_channels; ++oc) {
        const R* row = gyb + oc * p;
        R acc = R(0);
        for (std::int64_t q = 0; q < p; ++q) acc += row[q];
        grad_b->data[static_cast<std::size_t>(oc)] += acc;
      }
    }
    if (grad_x) {
      R* gxb = grad_x->data.data() + b * s.in_channels * t_in * f_in;
      if (pointwise) {
        detail::matmul_atb_acc(layer.weight.data.data(), gyb, gxb, k,
                               s.out_channels, p);
      } else {
        std::fill(gcol.begin(), gcol.end(), R(0));
        detail::matmul_atb_acc(layer.weight.data.data(), gyb, gcol.data(), k,
                               s.out_channels, p);
        detail::col2im_acc(gcol.data(), s.in_channels, t_in, f_in, s, t_out,
                           f_out, gxb);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Max pooling
// ---------------------------------------------------------------------------

struct Pool2dSpec {
  int kt = 3, kf = 3;
  int stride_t = 2, stride_f = 2;
  int pad_t = 1, pad_f = 1;
};

template <typename R>
Tensor<R> maxpool2d_forward(const Tensor<R>& x, const Pool2dSpec& s) {
  check(x.rank() == 4, "maxpool2d: input must be N x C x T x F");
  const std::int64_t n = x.dim(0), c = x.dim(1), t_in = x.dim(2),
                     f_in = x.dim(3);
  const std::int64_t t_out = conv_out_extent(t_in, s.kt, s.stride_t, s.pad_t);
  const std::int64_t f_out = conv_out_extent(f_in, s.kf, s.stride_f, s.pad_f);
  Tensor<R> y({n, c, t_out, f_out});

  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const R* xc = x.data.data() + (b * c + ch) * t_in * f_in;
      R* yc = y.data.data() + (b * c + ch) * t_out * f_out;
      for (std::int64_t ot = 0; ot < t_out; ++ot) {
        for (std::int64_t of = 0; of < f_out; ++of) {
          R best = -std::numeric_limits<R>::infinity();
          for (int i = 0; i < s.kt; ++i) {
            const std::int64_t it = ot * s.stride_t - s.pad_t + i;
            if (it < 0 || it >= t_in) continue;
            for (int j = 0; j < s.kf; ++j) {
              const std::int64_t jf = of * s.stride_f - s.pad_f + j;
              if (jf < 0 || jf >= f_in) continue;
              best = std::max(best, xc[it * f_in + jf]);
            }
          }
          yc[ot * f_out + of] = best;
        }
      }
    }
  }
  return y;
}

/// Routes each output gradient to the first (lowest time, then frequency)
/// argmax of its window. The argmax is recomputed from x.
template <typename R>
Tensor<R> maxpool2d_backward(const Tensor<R>& grad_out, const Tensor<R>& x,
                             const Pool2dSpec& s) {
  const std::int64_t n = x.dim(0), c = x.dim(1), t_in = x.dim(2),
                     f_in = x.dim(3);
  const std::int64_t t_out = conv_out_extent(t_in, s.kt, s.stride_t, s.pad_t);
  const std::int64_t f_out = conv_out_extent(f_in, s.kf, s.stride_f, s.pad_f);
  check_shape(grad_out, {n, c, t_out, f_out}, "maxpool2d_backward");
  Tensor<R> gx(x.shape);

  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const R* xc = x.data.data() + (b * c + ch) * t_in * f_in;
      const R* gyc = grad_out.data.data() + (b * c + ch) * t_out * f_out;
      R* gxc = gx.data.data() + (b * c + ch) * t_in * f_in;
      for (std::int64_t ot = 0; ot < t_out; ++ot) {
        for (std::int64_t of = 0; of < f_out; ++of) {
          R best = -std::numeric_limits<R>::infinity();
          std::int64_t arg = -1;
          for (int i = 0; i < s.kt; ++i) {
            const std::int64_t it = ot * s.stride_t - s.pad_t + i;
            if (it < 0 || it >= t_in) continue;
            for (int j = 0; j < s.kf; ++j) {
              const std::int64_t jf = of * s.stride_f - s.pad_f + j;
              if (jf < 0 || jf >= f_in) continue;
              const R v = xc[it * f_in + jf];
              if (v > best) {  // strict: first index wins on ties
                best = v;
                arg = it * f_in + jf;
              }
            }
          }
          if (arg >= 0) gxc[arg] += gyc[ot * f_out + of];
        }
      }
    }
  }
  return gx;
}

// ---------------------------------------------------------------------------
// Batch normalization (per channel over N, T, F)
// ---------------------------------------------------------------------------

enum class BnMode { kTrain, kEval, kFrozen };

template <typename R>
struct BatchNormLayer {
  std::int64_t channels = 0;
  Tensor<R> scale, shift;              // learnable
  Tensor<R> running_mean, running_var; // tracked in train mode only
  R momentum = R(0.1);
  R eps = R(1e-5);
  bool frozen = false;

  static BatchNormLayer make(std::int64_t c) {
    BatchNormLayer l;
    l.channels = c;
    l.scale = Tensor<R>({c}, R(1));
    l.shift = Tensor<R>({c});
    l.running_mean = Tensor<R>({c});
    l.running_var = Tensor<R>({c}, R(1));
    return l;
  }
};

/// Per-channel batch statistics kept for the backward pass.
template <typename R>
struct BnCache {
  Tensor<R> mean;
  Tensor<R> inv_std;
  BnMode mode = BnMode::kEval;
};

template <typename R>
Tensor<R> batchnorm_forward(const Tensor<R>& x, BatchNormLayer<R>& layer,
                            BnMode mode, BnCache<R>* cache = nullptr) {
  check(x.rank() == 4 && x.dim(1) == layer.channels,
        "batchnorm: channel extent mismatch");
  const std::int64_t n = x.dim(0), c = x.dim(1), t = x.dim(2), f = x.dim(3);
  const std::int64_t plane = t * f;
  const std::int64_t m = n * plane;

  Tensor<R> mean({c}), inv_std({c});
  if (mode == BnMode::kTrain) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      R sum = R(0);
      for (std::int64_t b = 0; b < n; ++b) {
        const R* xc = x.data.data() + (b * c + ch) * plane;
        for (std::int64_t i = 0; i < plane; ++i) sum += xc[i];
      }
      const R mu = sum / static_cast<R>(m);
      R var = R(0);
      for (std::int64_t b = 0; b < n; ++b) {
        const R* xc = x.data.data() + (b * c + ch) * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          const R d = xc[i] - mu;
          var += d * d;
        }
      }
      var /= static_cast<R>(m);
      mean.data[ch] = mu;
      inv_std.data[ch] = R(1) / std::sqrt(var + layer.eps);
      layer.running_mean.data[ch] =
          (R(1) - layer.momentum) * layer.running_mean.data[ch] +
          layer.momentum * mu;
      layer.running_var.data[ch] =
          (R(1) - layer.momentum) * layer.running_var.data[ch] +
          layer.momentum * var;
    }
  } else {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      mean.data[ch] = layer.running_mean.data[ch];
      inv_std.data[ch] =
          R(1) / std::sqrt(layer.running_var.data[ch] + layer.eps);
    }
  }

  Tensor<R> y(x.shape);
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const R mu = mean.data[ch];
      const R is = inv_std.data[ch];
      const R g = layer.scale.data[ch];
      const R bshift = layer.shift.data[ch];
      const R* xc = x.data.data() + (b * c + ch) * plane;
      R* yc = y.data.data() + (b * c + ch) * plane;
      for (std::int64_t i = 0; i < plane; ++i) {
        yc[i] = g * (xc[i] - mu) * is + bshift;
      }
    }
  }
  if (cache) {
    cache->mean = std::move(mean);
    cache->inv_std = std::move(inv_std);
    cache->mode = mode;
  }
  return y;
}

template <typename R>
void batchnorm_backward(const Tensor<R>& grad_out, const Tensor<R>& x,
                        const BatchNormLayer<R>& layer, const BnCache<R>& cache,
                        Tensor<R>* grad_x, Tensor<R>* grad_scale,
                        Tensor<R>* grad_shift) {
  const std::int64_t n = x.dim(0), c = x.dim(1), t = x.dim(2), f = x.dim(3);
  const std::int64_t plane = t * f;
  const std::int64_t m = n * plane;
  check_shape(grad_out, x.shape, "batchnorm_backward");
  if (grad_x && grad_x->shape != x.shape) *grad_x = Tensor<R>(x.shape);

  for (std::int64_t ch = 0; ch < c; ++ch) {
    const R mu = cache.mean.data[ch];
    const R is = cache.inv_std.data[ch];
    const R g = layer.scale.data[ch];
    R sum_dy = R(0), sum_dy_xhat = R(0);
    for (std::int64_t b = 0; b < n; ++b) {
      const R* xc = x.data.data() + (b * c + ch) * plane;
      const R* gyc = grad_out.data.data() + (b * c + ch) * plane;
      for (std::int64_t i = 0; i < plane; ++i) {
        sum_dy += gyc[i];
        sum_dy_xhat += gyc[i] * (xc[i] - mu) * is;
      }
    }
    if (grad_shift) grad_shift->data[ch] += sum_dy;
    if (grad_scale) grad_scale->data[ch] += sum_dy_xhat;
    if (!grad_x) continue;

    if (cache.mode == BnMode::kTrain) {
      const R inv_m = R(1) / static_cast<R>(m);
      for (std::int64_t b = 0; b < n; ++b) {
        const R* xc = x.data.data() + (b * c + ch) * plane;
        const R* gyc = grad_out.data.data() + (b * c + ch) * plane;
        R* gxc = grad_x->data.data() + (b * c + ch) * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          const R xhat = (xc[i] - mu) * is;
          gxc[i] += g * is * (gyc[i] - inv_m * sum_dy - inv_m * xhat * sum_dy_xhat);
        }
      }
    } else {
      // running statistics are constants
      for (std::int64_t b = 0; b < n; ++b) {
        const R* gyc = grad_out.data.data() + (b * c + ch) * plane;
        R* gxc = grad_x->data.data() + (b * c + ch) * plane;
        for (std::int64_t i = 0; i < plane; ++i) gxc[i] += g * is * gyc[i];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Pointwise / pooling / structural ops
// ---------------------------------------------------------------------------

template <typename R>
Tensor<R> relu_forward(const Tensor<R>& x) {
  Tensor<R> y(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    y.data[i] = x.data[i] > R(0) ? x.data[i] : R(0);
  }
  return y;
}

template <typename R>
Tensor<R> relu_backward(const Tensor<R>& grad_out, const Tensor<R>& x) {
  check_shape(grad_out, x.shape, "relu_backward");
  Tensor<R> gx(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    gx.data[i] = x.data[i] > R(0) ? grad_out.data[i] : R(0);
  }
  return gx;
}

/// Reduces (T, F) to 1x1 by averaging.
template <typename R>
Tensor<R> global_avg_pool_forward(const Tensor<R>& x) {
  check(x.rank() == 4, "global_avg_pool: input must be N x C x T x F");
  const std::int64_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor<R> y({n, c, 1, 1});
  for (std::int64_t i = 0; i < n * c; ++i) {
    const R* xc = x.data.data() + i * plane;
    R acc = R(0);
    for (std::int64_t q = 0; q < plane; ++q) acc += xc[q];
    y.data[i] = acc / static_cast<R>(plane);
  }
  return y;
}

template <typename R>
Tensor<R> global_avg_pool_backward(const Tensor<R>& grad_out,
                                   const Shape& x_shape) {
  const std::int64_t n = x_shape[0], c = x_shape[1],
                     plane = x_shape[2] * x_shape[3];
  check_shape(grad_out, {n, c, 1, 1}, "global_avg_pool_backward");
  Tensor<R> gx(x_shape);
  for (std::int64_t i = 0; i < n * c; ++i) {
    const R v = grad_out.data[i] / static_cast<R>(plane);
    R* gxc = gx.data.data() + i * plane;
    for (std::int64_t q = 0; q < plane; ++q) gxc[q] = v;
  }
  return gx;
}

template <typename R>
struct LinearLayer {
  Tensor<R> weight;  // [out, in]
  Tensor<R> bias;    // [out]

  static LinearLayer make(std::int64_t in, std::int64_t out) {
    LinearLayer l;
    l.weight = Tensor<R>({out, in});
    l.bias = Tensor<R>({out});
    return l;
  }
};

template <typename R>
Tensor<R> linear_forward(const Tensor<R>& x, const LinearLayer<R>& layer) {
  check(x.rank() == 2 && x.dim(1) == layer.weight.dim(1),
        "linear: input must be N x in_features");
  const std::int64_t n = x.dim(0), in = layer.weight.dim(1),
                     out = layer.weight.dim(0);
  Tensor<R> y({n, out});
  detail::matmul_abt_acc(x.data.data(), layer.weight.data.data(),
                         y.data.data(), n, in, out);
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < out; ++j) {
      y.data[i * out + j] += layer.bias.data[j];
    }
  }
  return y;
}

template <typename R>
void linear_backward(const Tensor<R>& grad_out, const Tensor<R>& x,
                     const LinearLayer<R>& layer, Tensor<R>* grad_x,
                     Tensor<R>* grad_w, Tensor<R>* grad_b) {
  const std::int64_t n = x.dim(0), in = layer.weight.dim(1),
                     out = layer.weight.dim(0);
  check_shape(grad_out, {n, out}, "linear_backward");
  if (grad_w) {
    // [out, in] += gy^T x
    detail::matmul_atb_acc(grad_out.data.data(), x.data.data(),
                           grad_w->data.data(), out, n, in);
  }
  if (grad_b) {
    for (std::int64_t i = 0; i < n; ++i) {
      for (std::int64_t j = 0; j < out; ++j) {
        grad_b->data[j] += grad_out.data[i * out + j];
      }
    }
  }
  if (grad_x) {
    if (grad_x->shape != x.shape) *grad_x = Tensor<R>(x.shape);
    detail::matmul_acc(grad_out.data.data(), layer.weight.data.data(),
                       grad_x->data.data(), n, out, in);
  }
}

/// Train-mode dropout: survivors scaled by 1/(1-p). Returns the mask so the
/// backward pass can reuse it; eval mode (or p == 0) is the identity.
template <typename R>
Tensor<R> dropout_forward(const Tensor<R>& x, R p, bool train, Rng& rng,
                          Tensor<R>* mask_out = nullptr) {
  check(p >= R(0) && p < R(1), "dropout: p must be in [0, 1)");
  Tensor<R> y(x.shape);
  Tensor<R> mask(x.shape, R(1));
  if (train && p > R(0)) {
    const R keep_scale = R(1) / (R(1) - p);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      mask.data[i] = rng.next_unit() < static_cast<double>(p) ? R(0) : keep_scale;
    }
  }
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    y.data[i] = x.data[i] * mask.data[i];
  }
  if (mask_out) *mask_out = std::move(mask);
  return y;
}

template <typename R>
Tensor<R> dropout_backward(const Tensor<R>& grad_out, const Tensor<R>& mask) {
  check_shape(grad_out, mask.shape, "dropout_backward");
  Tensor<R> gx(grad_out.shape);
  for (std::size_t i = 0; i < gx.data.size(); ++i) {
    gx.data[i] = grad_out.data[i] * mask.data[i];
  }
  return gx;
}

/// Concatenates along the channel axis; all inputs must share N, T, F.
template <typename R>
Tensor<R> concat_channels_forward(const std::vector<const Tensor<R>*>& xs) {
  check(!xs.empty(), "concat_channels: no inputs");
  const std::int64_t n = xs[0]->dim(0), t = xs[0]->dim(2), f = xs[0]->dim(3);
  std::int64_t c_total = 0;
  for (const auto* x : xs) {
    check(x->rank() == 4 && x->dim(0) == n && x->dim(2) == t && x->dim(3) == f,
          "concat_channels: N, T, F extents must match");
    c_total += x->dim(1);
  }
  Tensor<R> y({n, c_total, t, f});
  const std::int64_t plane = t * f;
  for (std::int64_t b = 0; b < n; ++b) {
    std::int64_t c_off = 0;
    for (const auto* x : xs) {
      const std::int64_t c = x->dim(1);
      std::copy_n(x->data.data() + b * c * plane, c * plane,
                  y.data.data() + (b * c_total + c_off) * plane);
      c_off += c;
    }
  }
  return y;
}

template <typename R>
std::vector<Tensor<R>> concat_channels_backward(
    const Tensor<R>& grad_out, const std::vector<Shape>& in_shapes) {
  std::vector<Tensor<R>> grads;
  grads.reserve(in_shapes.size());
  for (const auto& s : in_shapes) grads.emplace_back(s);
  const std::int64_t n = grad_out.dim(0), c_total = grad_out.dim(1),
                     plane = grad_out.dim(2) * grad_out.dim(3);
  for (std::int64_t b = 0; b < n; ++b) {
    std::int64_t c_off = 0;
    for (auto& g : grads) {
      const std::int64_t c = g.dim(1);
      std::copy_n(grad_out.data.data() + (b * c_total + c_off) * plane,
                  c * plane, g.data.data() + b * c * plane);
      c_off += c;
    }
  }
  return grads;
}

/// Keeps frames 0, stride, 2*stride, ... along the time axis.
template <typename R>
Tensor<R> subsample_time_forward(const Tensor<R>& x, int stride) {
  check(stride >= 1, "subsample_time: stride must be >= 1");
  if (stride == 1) return x;
  const std::int64_t n = x.dim(0), c = x.dim(1), t = x.dim(2), f = x.dim(3);
  const std::int64_t t_out = (t + stride - 1) / stride;
  Tensor<R> y({n, c, t_out, f});
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      for (std::int64_t ot = 0; ot < t_out; ++ot) {
        std::copy_n(x.data.data() + x.off4(b, ch, ot * stride, 0), f,
                    y.data.data() + y.off4(b, ch, ot, 0));
      }
    }
  }
  return y;
}

template <typename R>
Tensor<R> subsample_time_backward(const Tensor<R>& grad_out,
                                  const Shape& x_shape, int stride) {
  Tensor<R> gx(x_shape);
  if (stride == 1) {
    gx.data = grad_out.data;
    return gx;
  }
  const std::int64_t n = x_shape[0], c = x_shape[1], f = x_shape[3];
  const std::int64_t t_out = grad_out.dim(2);
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      for (std::int64_t ot = 0; ot < t_out; ++ot) {
        std::copy_n(grad_out.data.data() + grad_out.off4(b, ch, ot, 0), f,
                    gx.data.data() + gx.off4(b, ch, ot * stride, 0));
      }
    }
  }
  return gx;
}

// ---------------------------------------------------------------------------
// Softmax and cross-entropy
// ---------------------------------------------------------------------------

/// Row-wise softmax of an N x K logit matrix, stabilized by max-subtraction.
template <typename R>
Tensor<R> softmax(const Tensor<R>& logits) {
  check(logits.rank() == 2, "softmax: input must be N x K");
  const std::int64_t n = logits.dim(0), k = logits.dim(1);
  Tensor<R> p(logits.shape);
  for (std::int64_t i = 0; i < n; ++i) {
    const R* row = logits.data.data() + i * k;
    R* prow = p.data.data() + i * k;
    R mx = row[0];
    for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    R sum = R(0);
    for (std::int64_t j = 0; j < k; ++j) {
      prow[j] = std::exp(row[j] - mx);
      sum += prow[j];
    }
    for (std::int64_t j = 0; j < k; ++j) prow[j] /= sum;
  }
  return p;
}

/// Mean over the batch of -log softmax(logits)[label]. The returned probs
/// feed the backward pass.
template <typename R>
R softmax_cross_entropy_forward(const Tensor<R>& logits,
                                const std::vector<int>& labels,
                                Tensor<R>* probs_out = nullptr) {
  const std::int64_t n = logits.dim(0), k = logits.dim(1);
  check(static_cast<std::int64_t>(labels.size()) == n,
        "cross_entropy: one label per row required");
  for (const int y : labels) {
    check(y >= 0 && y < k, "cross_entropy: label ", y, " out of range [0, ", k,
          ")");
  }
  Tensor<R> p = softmax(logits);
  R loss = R(0);
  for (std::int64_t i = 0; i < n; ++i) {
    const R* row = logits.data.data() + i * k;
    R mx = row[0];
    for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    R sum = R(0);
    for (std::int64_t j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
    loss += -(row[labels[i]] - mx - std::log(sum));
  }
  loss /= static_cast<R>(n);
  if (probs_out) *probs_out = std::move(p);
  return loss;
}

template <typename R>
Tensor<R> softmax_cross_entropy_backward(R grad_loss, const Tensor<R>& probs,
                                         const std::vector<int>& labels) {
  const std::int64_t n = probs.dim(0), k = probs.dim(1);
  Tensor<R> g(probs.shape);
  const R scale = grad_loss / static_cast<R>(n);
  for (std::int64_t i = 0; i < n; ++i) {
    const R* prow = probs.data.data() + i * k;
    R* grow = g.data.data() + i * k;
    for (std::int64_t j = 0; j < k; ++j) grow[j] = prow[j] * scale;
    grow[labels[i]] -= scale;
  }
  return g;
}

}  // namespace asf
