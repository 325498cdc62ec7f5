// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

#include "afiu/kernels.hpp"

#include <cblas.h>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace afiu::kernels {

namespace {

// Below this many elements the OpenMP fork/join costs more than it saves.
constexpr int64_t kParallelGrain = 1 << 14;

void check_conv_shapes(const Shape& x, const Shape& w, const ConvParams& p) {
  if (x.size() != 4 || w.size() != 4) throw std::invalid_argument("conv2d: expected 4-D input and weight");
  if (x[1] != w[1]) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(x[1]) + " channels, weight expects " +
                                std::to_string(w[1]));
  }
  if (p.stride < 1 || p.dilation < 1 || p.padding < 0) throw std::invalid_argument("conv2d: bad geometry");
}

template <typename T>
void im2col(const T* x, int64_t channels, int64_t h, int64_t w, int64_t kh, int64_t kw, const ConvParams& p,
            int64_t out_h, int64_t out_w, T* col) {
  const int64_t rows = channels * kh * kw;
  const int64_t plane = out_h * out_w;
#pragma omp parallel for schedule(static) if (rows * plane > kParallelGrain)
  for (int64_t row = 0; row < rows; ++row) {
    const int64_t c = row / (kh * kw);
    const int64_t ky = (row / kw) % kh;
    const int64_t kx = row % kw;
    const T* src = x + c * h * w;
    T* dst = col + row * plane;
    for (int64_t oy = 0; oy < out_h; ++oy) {
      const int64_t iy = oy * p.stride - p.padding + ky * p.dilation;
      T* drow = dst + oy * out_w;
      if (iy < 0 || iy >= h) {
        std::fill(drow, drow + out_w, T(0));
        continue;
      }
      const T* srow = src + iy * w;
      for (int64_t ox = 0; ox < out_w; ++ox) {
        const int64_t ix = ox * p.stride - p.padding + kx * p.dilation;
        drow[ox] = (ix >= 0 && ix < w) ? srow[ix] : T(0);
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int64_t channels, int64_t h, int64_t w, int64_t kh, int64_t kw, const ConvParams& p,
                int64_t out_h, int64_t out_w, T* x) {
  const int64_t plane = out_h * out_w;
  // One channel per iteration: each writes a disjoint input plane.
#pragma omp parallel for schedule(static) if (channels * kh * kw * plane > kParallelGrain)
  for (int64_t c = 0; c < channels; ++c) {
    T* dst = x + c * h * w;
    for (int64_t ky = 0; ky < kh; ++ky) {
      for (int64_t kx = 0; kx < kw; ++kx) {
        const T* src = col + ((c * kh + ky) * kw + kx) * plane;
        for (int64_t oy = 0; oy < out_h; ++oy) {
          const int64_t iy = oy * p.stride - p.padding + ky * p.dilation;
          if (iy < 0 || iy >= h) continue;
          T* drow = dst + iy * w;
          const T* srow = src + oy * out_w;
          for (int64_t ox = 0; ox < out_w; ++ox) {
            const int64_t ix = ox * p.stride - p.padding + kx * p.dilation;
            if (ix >= 0 && ix < w) drow[ix] += srow[ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(int64_t kh, int64_t kw, const ConvParams& p) {
  return kh == 1 && kw == 1 && p.stride == 1 && p.padding == 0;
}

struct AxisMap {
  std::vector<int64_t> i0, i1;
  std::vector<double> l0, l1;
};

AxisMap bilinear_axis(int64_t in, int64_t out) {
  AxisMap m;
  m.i0.resize(out);
  m.i1.resize(out);
  m.l0.resize(out);
  m.l1.resize(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (int64_t d = 0; d < out; ++d) {
    double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int64_t i0 = static_cast<int64_t>(src);
    if (i0 > in - 1) i0 = in - 1;
    const int64_t i1 = i0 < in - 1 ? i0 + 1 : i0;
    const double l1 = src - static_cast<double>(i0);
    m.i0[d] = i0;
    m.i1[d] = i1;
    m.l1[d] = l1;
    m.l0[d] = 1.0 - l1;
  }
  return m;
}

std::vector<int64_t> nearest_axis(int64_t in, int64_t out) {
  std::vector<int64_t> idx(out);
  for (int64_t d = 0; d < out; ++d) idx[d] = std::min(in - 1, (d * in) / out);
  return idx;
}

}  // namespace

void set_num_threads(int n) {
  if (n < 1) throw std::invalid_argument("thread count must be >= 1");
  omp_set_num_threads(n);
  openblas_set_num_threads(n);
}

int64_t conv_out_extent(int64_t in, int64_t kernel, const ConvParams& p) {
  const int64_t span = p.dilation * (kernel - 1) + 1;
  const int64_t out = (in + 2 * p.padding - span) / p.stride + 1;
  if (in + 2 * p.padding < span || out < 1) {
    throw std::invalid_argument("conv2d: kernel extent " + std::to_string(span) + " exceeds padded input " +
                                std::to_string(in + 2 * p.padding));
  }
  return out;
}

template <>
void gemm<float>(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, float alpha, const float* a,
                 int64_t lda, const float* b, int64_t ldb, float beta, float* c, int64_t ldc) {
  if (m == 0 || n == 0) return;
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a, static_cast<int>(lda), b,
              static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

template <>
void gemm<double>(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, double alpha, const double* a,
                  int64_t lda, const double* b, int64_t ldb, double beta, double* c, int64_t ldc) {
  if (m == 0 || n == 0) return;
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a, static_cast<int>(lda), b,
              static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias, const ConvParams& p) {
  check_conv_shapes(x.shape(), weight.shape(), p);
  const int64_t batch = x.n(), cin = x.c(), h = x.h(), w = x.w();
  const int64_t cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  const int64_t out_h = conv_out_extent(h, kh, p), out_w = conv_out_extent(w, kw, p);
  const int64_t plane = out_h * out_w, depth = cin * kh * kw;
  if (bias && bias->numel() != cout) throw std::invalid_argument("conv2d: bias length mismatch");

  Tensor<T> out({batch, cout, out_h, out_w});
  const bool pointwise = is_pointwise(kh, kw, p);
  std::vector<T> col(pointwise ? 0 : static_cast<size_t>(depth * plane));
  for (int64_t n = 0; n < batch; ++n) {
    const T* xn = x.data() + n * cin * h * w;
    const T* src = xn;
    if (!pointwise) {
      im2col(xn, cin, h, w, kh, kw, p, out_h, out_w, col.data());
      src = col.data();
    }
    T* on = out.data() + n * cout * plane;
    gemm<T>(false, false, cout, plane, depth, T(1), weight.data(), depth, src, plane, T(0), on, plane);
    if (bias) {
#pragma omp parallel for schedule(static) if (cout * plane > kParallelGrain)
      for (int64_t o = 0; o < cout; ++o) {
        const T b = (*bias)[o];
        T* row = on + o * plane;
        for (int64_t i = 0; i < plane; ++i) row[i] += b;
      }
    }
  }
  return out;
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_out, const ConvParams& p,
                     Tensor<T>* grad_x, Tensor<T>* grad_weight, Tensor<T>* grad_bias) {
  check_conv_shapes(x.shape(), weight.shape(), p);
  const int64_t batch = x.n(), cin = x.c(), h = x.h(), w = x.w();
  const int64_t cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  const int64_t out_h = grad_out.h(), out_w = grad_out.w();
  const int64_t plane = out_h * out_w, depth = cin * kh * kw;
  const bool pointwise = is_pointwise(kh, kw, p);
  std::vector<T> col(pointwise ? 0 : static_cast<size_t>(depth * plane));

  for (int64_t n = 0; n < batch; ++n) {
    const T* gn = grad_out.data() + n * cout * plane;
    const T* xn = x.data() + n * cin * h * w;
    if (grad_weight) {
      const T* src = xn;
      if (!pointwise) {
        im2col(xn, cin, h, w, kh, kw, p, out_h, out_w, col.data());
        src = col.data();
      }
      gemm<T>(false, true, cout, depth, plane, T(1), gn, plane, src, plane, T(1), grad_weight->data(), depth);
    }
    if (grad_bias) {
      for (int64_t o = 0; o < cout; ++o) {
        T s = 0;
        const T* row = gn + o * plane;
        for (int64_t i = 0; i < plane; ++i) s += row[i];
        (*grad_bias)[o] += s;
      }
    }
    if (grad_x) {
      T* gx = grad_x->data() + n * cin * h * w;
      if (pointwise) {
        gemm<T>(true, false, depth, plane, cout, T(1), weight.data(), depth, gn, plane, T(1), gx, plane);
      } else {
        gemm<T>(true, false, depth, plane, cout, T(1), weight.data(), depth, gn, plane, T(0), col.data(), plane);
        col2im_add(col.data(), cin, h, w, kh, kw, p, out_h, out_w, gx);
      }
    }
  }
}

template <typename T>
Tensor<T> resize_forward(const Tensor<T>& x, int64_t out_h, int64_t out_w, Interp mode) {
  require_feature_map(x, "resize");
  const int64_t planes = x.n() * x.c(), h = x.h(), w = x.w();
  Tensor<T> out({x.n(), x.c(), out_h, out_w});
  if (mode == Interp::nearest) {
    const auto ys = nearest_axis(h, out_h), xs = nearest_axis(w, out_w);
#pragma omp parallel for schedule(static) if (planes * out_h * out_w > kParallelGrain)
    for (int64_t pl = 0; pl < planes; ++pl) {
      const T* src = x.data() + pl * h * w;
      T* dst = out.data() + pl * out_h * out_w;
      for (int64_t oy = 0; oy < out_h; ++oy)
        for (int64_t ox = 0; ox < out_w; ++ox) dst[oy * out_w + ox] = src[ys[oy] * w + xs[ox]];
    }
    return out;
  }
  const AxisMap ym = bilinear_axis(h, out_h), xm = bilinear_axis(w, out_w);
#pragma omp parallel for schedule(static) if (planes * out_h * out_w > kParallelGrain)
  for (int64_t pl = 0; pl < planes; ++pl) {
    const T* src = x.data() + pl * h * w;
    T* dst = out.data() + pl * out_h * out_w;
    for (int64_t oy = 0; oy < out_h; ++oy) {
      const T* r0 = src + ym.i0[oy] * w;
      const T* r1 = src + ym.i1[oy] * w;
      const T wy0 = static_cast<T>(ym.l0[oy]), wy1 = static_cast<T>(ym.l1[oy]);
      for (int64_t ox = 0; ox < out_w; ++ox) {
        const T wx0 = static_cast<T>(xm.l0[ox]), wx1 = static_cast<T>(xm.l1[ox]);
        const int64_t x0 = xm.i0[ox], x1 = xm.i1[ox];
        dst[oy * out_w + ox] = wy0 * (wx0 * r0[x0] + wx1 * r0[x1]) + wy1 * (wx0 * r1[x0] + wx1 * r1[x1]);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> resize_backward(const Tensor<T>& grad_out, int64_t in_h, int64_t in_w, Interp mode) {
  const int64_t planes = grad_out.n() * grad_out.c(), out_h = grad_out.h(), out_w = grad_out.w();
  Tensor<T> gx({grad_out.n(), grad_out.c(), in_h, in_w});
  if (mode == Interp::nearest) {
    const auto ys = nearest_axis(in_h, out_h), xs = nearest_axis(in_w, out_w);
#pragma omp parallel for schedule(static) if (planes * out_h * out_w > kParallelGrain)
    for (int64_t pl = 0; pl < planes; ++pl) {
      const T* g = grad_out.data() + pl * out_h * out_w;
      T* dst = gx.data() + pl * in_h * in_w;
      for (int64_t oy = 0; oy < out_h; ++oy)
        for (int64_t ox = 0; ox < out_w; ++ox) dst[ys[oy] * in_w + xs[ox]] += g[oy * out_w + ox];
    }
    return gx;
  }
  const AxisMap ym = bilinear_axis(in_h, out_h), xm = bilinear_axis(in_w, out_w);
#pragma omp parallel for schedule(static) if (planes * out_h * out_w > kParallelGrain)
  for (int64_t pl = 0; pl < planes; ++pl) {
    const T* g = grad_out.data() + pl * out_h * out_w;
    T* dst = gx.data() + pl * in_h * in_w;
    for (int64_t oy = 0; oy < out_h; ++oy) {
      T* r0 = dst + ym.i0[oy] * in_w;
      T* r1 = dst + ym.i1[oy] * in_w;
      const T wy0 = static_cast<T>(ym.l0[oy]), wy1 = static_cast<T>(ym.l1[oy]);
      for (int64_t ox = 0; ox < out_w; ++ox) {
        const T v = g[oy * out_w + ox];
        const T wx0 = static_cast<T>(xm.l0[ox]), wx1 = static_cast<T>(xm.l1[ox]);
        r0[xm.i0[ox]] += wy0 * wx0 * v;
        r0[xm.i1[ox]] += wy0 * wx1 * v;
        r1[xm.i0[ox]] += wy1 * wx0 * v;
        r1[xm.i1[ox]] += wy1 * wx1 * v;
      }
    }
  }
  return gx;
}

template <typename T>
MaxPoolResult<T> max_pool_forward(const Tensor<T>& x, int kernel, int stride, int padding) {
  require_feature_map(x, "max_pool");
  const ConvParams p{stride, padding, 1};
  const int64_t h = x.h(), w = x.w();
  const int64_t out_h = conv_out_extent(h, kernel, p), out_w = conv_out_extent(w, kernel, p);
  const int64_t planes = x.n() * x.c();
  MaxPoolResult<T> r{Tensor<T>({x.n(), x.c(), out_h, out_w}), std::vector<int64_t>(planes * out_h * out_w)};
#pragma omp parallel for schedule(static) if (planes * out_h * out_w > kParallelGrain)
  for (int64_t pl = 0; pl < planes; ++pl) {
    const T* src = x.data() + pl * h * w;
    T* dst = r.out.data() + pl * out_h * out_w;
    int64_t* arg = r.argmax.data() + pl * out_h * out_w;
    for (int64_t oy = 0; oy < out_h; ++oy) {
      for (int64_t ox = 0; ox < out_w; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        int64_t best_i = -1;
        for (int ky = 0; ky < kernel; ++ky) {
          const int64_t iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int64_t ix = ox * stride - padding + kx;
            if (ix < 0 || ix >= w) continue;
            const T v = src[iy * w + ix];
            if (best_i < 0 || v > best) {
              best = v;
              best_i = iy * w + ix;
            }
          }
        }
        dst[oy * out_w + ox] = best;
        arg[oy * out_w + ox] = best_i;
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> max_pool_backward(const Tensor<T>& grad_out, const std::vector<int64_t>& argmax, const Shape& in_shape) {
  Tensor<T> gx(in_shape);
  const int64_t planes = grad_out.n() * grad_out.c();
  const int64_t out_plane = grad_out.h() * grad_out.w(), in_plane = in_shape[2] * in_shape[3];
#pragma omp parallel for schedule(static) if (planes * out_plane > kParallelGrain)
  for (int64_t pl = 0; pl < planes; ++pl) {
    const T* g = grad_out.data() + pl * out_plane;
    const int64_t* arg = argmax.data() + pl * out_plane;
    T* dst = gx.data() + pl * in_plane;
    for (int64_t i = 0; i < out_plane; ++i) dst[arg[i]] += g[i];
  }
  return gx;
}

template <typename T>
Tensor<T> batch_norm_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps,
                           std::vector<double>& mean, std::vector<double>& var, Tensor<T>& x_hat) {
  require_feature_map(x, "batch_norm");
  const int64_t batch = x.n(), channels = x.c(), plane = x.h() * x.w();
  if (gamma.numel() != channels || beta.numel() != channels) {
    throw std::invalid_argument("batch_norm: expected " + std::to_string(gamma.numel()) + " channels, got " +
                                std::to_string(channels));
  }
  mean.assign(channels, 0.0);
  var.assign(channels, 0.0);
  x_hat = Tensor<T>(x.shape());
  Tensor<T> y(x.shape());
  const double count = static_cast<double>(batch * plane);
#pragma omp parallel for schedule(static) if (x.numel() > kParallelGrain)
  for (int64_t c = 0; c < channels; ++c) {
    double s = 0;
    for (int64_t n = 0; n < batch; ++n) {
      const T* src = x.data() + (n * channels + c) * plane;
      for (int64_t i = 0; i < plane; ++i) s += src[i];
    }
    const double mu = s / count;
    double ss = 0;
    for (int64_t n = 0; n < batch; ++n) {
      const T* src = x.data() + (n * channels + c) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        const double d = src[i] - mu;
        ss += d * d;
      }
    }
    const double v = ss / count;
    mean[c] = mu;
    var[c] = v;
    const T inv_std = static_cast<T>(1.0 / std::sqrt(v + eps));
    const T m = static_cast<T>(mu), g = gamma[c], b = beta[c];
    for (int64_t n = 0; n < batch; ++n) {
      const int64_t off = (n * channels + c) * plane;
      const T* src = x.data() + off;
      T* xh = x_hat.data() + off;
      T* dst = y.data() + off;
      for (int64_t i = 0; i < plane; ++i) {
        xh[i] = (src[i] - m) * inv_std;
        dst[i] = g * xh[i] + b;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> batch_norm_eval(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          const Tensor<T>& running_mean, const Tensor<T>& running_var, double eps, Tensor<T>* x_hat) {
  require_feature_map(x, "batch_norm");
  const int64_t batch = x.n(), channels = x.c(), plane = x.h() * x.w();
  if (gamma.numel() != channels) {
    throw std::invalid_argument("batch_norm: expected " + std::to_string(gamma.numel()) + " channels, got " +
                                std::to_string(channels));
  }
  Tensor<T> y(x.shape());
  if (x_hat) *x_hat = Tensor<T>(x.shape());
#pragma omp parallel for schedule(static) if (x.numel() > kParallelGrain)
  for (int64_t c = 0; c < channels; ++c) {
    const T inv_std = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var[c]) + eps));
    const T m = running_mean[c], g = gamma[c], b = beta[c];
    for (int64_t n = 0; n < batch; ++n) {
      const int64_t off = (n * channels + c) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        const T xh = (x[off + i] - m) * inv_std;
        if (x_hat) (*x_hat)[off + i] = xh;
        y[off + i] = g * xh + b;
      }
    }
  }
  return y;
}

template <typename T>
void batch_norm_backward(const Tensor<T>& grad_out, const Tensor<T>& x_hat, const Tensor<T>& gamma,
                         const std::vector<double>& inv_std, bool batch_stats, Tensor<T>* grad_x,
                         Tensor<T>* grad_gamma, Tensor<T>* grad_beta) {
  const int64_t batch = grad_out.n(), channels = grad_out.c(), plane = grad_out.h() * grad_out.w();
  const double count = static_cast<double>(batch * plane);
#pragma omp parallel for schedule(static) if (grad_out.numel() > kParallelGrain)
  for (int64_t c = 0; c < channels; ++c) {
    double sum_g = 0, sum_gx = 0;
    for (int64_t n = 0; n < batch; ++n) {
      const int64_t off = (n * channels + c) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        sum_g += grad_out[off + i];
        sum_gx += static_cast<double>(grad_out[off + i]) * x_hat[off + i];
      }
    }
    if (grad_gamma) (*grad_gamma)[c] += static_cast<T>(sum_gx);
    if (grad_beta) (*grad_beta)[c] += static_cast<T>(sum_g);
    if (!grad_x) continue;
    const double scale = static_cast<double>(gamma[c]) * inv_std[c];
    const T mean_g = static_cast<T>(sum_g / count), mean_gx = static_cast<T>(sum_gx / count);
    const T s = static_cast<T>(scale);
    for (int64_t n = 0; n < batch; ++n) {
      const int64_t off = (n * channels + c) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        const T g = grad_out[off + i];
        (*grad_x)[off + i] += batch_stats ? s * (g - mean_g - x_hat[off + i] * mean_gx) : s * g;
      }
    }
  }
}

template <typename T>
void relu_forward(const T* x, T* y, int64_t n) {
#pragma omp parallel for simd schedule(static) if (n > kParallelGrain)
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] < T(0) ? T(0) : x[i];  // NaN propagates
}

template <typename T>
void relu_backward(const T* y, const T* grad_out, T* grad_x, int64_t n) {
#pragma omp parallel for simd schedule(static) if (n > kParallelGrain)
  for (int64_t i = 0; i < n; ++i) grad_x[i] += y[i] > T(0) ? grad_out[i] : T(0);
}

template <typename T>
void sigmoid_forward(const T* x, T* y, int64_t n) {
#pragma omp parallel for schedule(static) if (n > kParallelGrain)
  for (int64_t i = 0; i < n; ++i) {
    if (x[i] >= T(0)) {
      y[i] = T(1) / (T(1) + std::exp(-x[i]));
    } else {
      const T e = std::exp(x[i]);
      y[i] = e / (T(1) + e);
    }
  }
}

template <typename T>
void add_into(T* dst, const T* src, int64_t n) {
#pragma omp parallel for simd schedule(static) if (n > kParallelGrain)
  for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
}

template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Tensor<T>& first = *parts.front();
  require_feature_map(first, "concat");
  int64_t channels = 0;
  for (const Tensor<T>* t : parts) {
    require_feature_map(*t, "concat");
    if (t->n() != first.n() || t->h() != first.h() || t->w() != first.w()) {
      throw std::invalid_argument("concat: incompatible shapes " + shape_to_string(first.shape()) + " and " +
                                  shape_to_string(t->shape()));
    }
    channels += t->c();
  }
  const int64_t plane = first.h() * first.w();
  Tensor<T> out({first.n(), channels, first.h(), first.w()});
  for (int64_t n = 0; n < first.n(); ++n) {
    T* dst = out.data() + n * channels * plane;
    for (const Tensor<T>* t : parts) {
      const int64_t len = t->c() * plane;
      std::copy_n(t->data() + n * len, len, dst);
      dst += len;
    }
  }
  return out;
}

#define AFIU_INSTANTIATE_KERNELS(T)                                                                               \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, const ConvParams&);     \
  template void conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const ConvParams&,          \
                                Tensor<T>*, Tensor<T>*, Tensor<T>*);                                              \
  template Tensor<T> resize_forward(const Tensor<T>&, int64_t, int64_t, Interp);                                  \
  template Tensor<T> resize_backward(const Tensor<T>&, int64_t, int64_t, Interp);                                 \
  template MaxPoolResult<T> max_pool_forward(const Tensor<T>&, int, int, int);                                    \
  template Tensor<T> max_pool_backward(const Tensor<T>&, const std::vector<int64_t>&, const Shape&);              \
  template Tensor<T> batch_norm_train(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double,               \
                                      std::vector<double>&, std::vector<double>&, Tensor<T>&);                    \
  template Tensor<T> batch_norm_eval(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                     const Tensor<T>&, double, Tensor<T>*);                                       \
  template void batch_norm_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                         \
                                    const std::vector<double>&, bool, Tensor<T>*, Tensor<T>*, Tensor<T>*);        \
  template void relu_forward(const T*, T*, int64_t);                                                              \
  template void relu_backward(const T*, const T*, T*, int64_t);                                                   \
  template void sigmoid_forward(const T*, T*, int64_t);                                                           \
  template void add_into(T*, const T*, int64_t);                                                                  \
  template Tensor<T> concat_channels(const std::vector<const Tensor<T>*>&);

AFIU_INSTANTIATE_KERNELS(float)
AFIU_INSTANTIATE_KERNELS(double)

}  // namespace afiu::kernels
