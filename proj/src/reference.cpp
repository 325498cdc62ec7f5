// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

#include "afiu/reference.hpp"

#include <cmath>
#include <limits>

namespace afiu::reference {

using kernels::ConvParams;
using kernels::Interp;

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias, const ConvParams& p) {
  const int64_t cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  const int64_t out_h = kernels::conv_out_extent(x.h(), kh, p), out_w = kernels::conv_out_extent(x.w(), kw, p);
  Tensor<T> out({x.n(), cout, out_h, out_w});
  for (int64_t n = 0; n < x.n(); ++n)
    for (int64_t o = 0; o < cout; ++o)
      for (int64_t oy = 0; oy < out_h; ++oy)
        for (int64_t ox = 0; ox < out_w; ++ox) {
          T acc = bias ? (*bias)[o] : T(0);
          for (int64_t c = 0; c < x.c(); ++c)
            for (int64_t ky = 0; ky < kh; ++ky)
              for (int64_t kx = 0; kx < kw; ++kx) {
                const int64_t iy = oy * p.stride - p.padding + ky * p.dilation;
                const int64_t ix = ox * p.stride - p.padding + kx * p.dilation;
                if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
                acc += weight.at(o, c, ky, kx) * x.at(n, c, iy, ix);
              }
          out.at(n, o, oy, ox) = acc;
        }
  return out;
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_out, const ConvParams& p,
                     Tensor<T>& grad_x, Tensor<T>& grad_weight, Tensor<T>& grad_bias) {
  grad_x = Tensor<T>(x.shape());
  grad_weight = Tensor<T>(weight.shape());
  grad_bias = Tensor<T>({weight.dim(0)});
  const int64_t kh = weight.dim(2), kw = weight.dim(3);
  for (int64_t n = 0; n < x.n(); ++n)
    for (int64_t o = 0; o < weight.dim(0); ++o)
      for (int64_t oy = 0; oy < grad_out.h(); ++oy)
        for (int64_t ox = 0; ox < grad_out.w(); ++ox) {
          const T g = grad_out.at(n, o, oy, ox);
          grad_bias[o] += g;
          for (int64_t c = 0; c < x.c(); ++c)
            for (int64_t ky = 0; ky < kh; ++ky)
              for (int64_t kx = 0; kx < kw; ++kx) {
                const int64_t iy = oy * p.stride - p.padding + ky * p.dilation;
                const int64_t ix = ox * p.stride - p.padding + kx * p.dilation;
                if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
                grad_weight.at(o, c, ky, kx) += g * x.at(n, c, iy, ix);
                grad_x.at(n, c, iy, ix) += g * weight.at(o, c, ky, kx);
              }
        }
}

template <typename T>
Tensor<T> resize(const Tensor<T>& x, int64_t out_h, int64_t out_w, Interp mode) {
  Tensor<T> out({x.n(), x.c(), out_h, out_w});
  const double sy = static_cast<double>(x.h()) / out_h, sx = static_cast<double>(x.w()) / out_w;
  for (int64_t n = 0; n < x.n(); ++n)
    for (int64_t c = 0; c < x.c(); ++c)
      for (int64_t oy = 0; oy < out_h; ++oy)
        for (int64_t ox = 0; ox < out_w; ++ox) {
          if (mode == Interp::nearest) {
            const auto iy = static_cast<int64_t>(std::floor(oy * sy));
            const auto ix = static_cast<int64_t>(std::floor(ox * sx));
            out.at(n, c, oy, ox) = x.at(n, c, std::min(iy, x.h() - 1), std::min(ix, x.w() - 1));
            continue;
          }
          const double fy = std::max(0.0, (oy + 0.5) * sy - 0.5);
          const double fx = std::max(0.0, (ox + 0.5) * sx - 0.5);
          const int64_t y0 = std::min<int64_t>(static_cast<int64_t>(fy), x.h() - 1);
          const int64_t x0 = std::min<int64_t>(static_cast<int64_t>(fx), x.w() - 1);
          const int64_t y1 = std::min(y0 + 1, x.h() - 1), x1 = std::min(x0 + 1, x.w() - 1);
          const T ly = static_cast<T>(fy - y0), lx = static_cast<T>(fx - x0);
          const T top = (T(1) - lx) * x.at(n, c, y0, x0) + lx * x.at(n, c, y0, x1);
          const T bottom = (T(1) - lx) * x.at(n, c, y1, x0) + lx * x.at(n, c, y1, x1);
          out.at(n, c, oy, ox) = (T(1) - ly) * top + ly * bottom;
        }
  return out;
}

template <typename T>
Tensor<T> max_pool(const Tensor<T>& x, int kernel, int stride, int padding) {
  const ConvParams p{stride, padding, 1};
  const int64_t out_h = kernels::conv_out_extent(x.h(), kernel, p), out_w = kernels::conv_out_extent(x.w(), kernel, p);
  Tensor<T> out({x.n(), x.c(), out_h, out_w});
  for (int64_t n = 0; n < x.n(); ++n)
    for (int64_t c = 0; c < x.c(); ++c)
      for (int64_t oy = 0; oy < out_h; ++oy)
        for (int64_t ox = 0; ox < out_w; ++ox) {
          T best = -std::numeric_limits<T>::infinity();
          for (int ky = 0; ky < kernel; ++ky)
            for (int kx = 0; kx < kernel; ++kx) {
              const int64_t iy = oy * stride - padding + ky, ix = ox * stride - padding + kx;
              if (iy >= 0 && iy < x.h() && ix >= 0 && ix < x.w()) best = std::max(best, x.at(n, c, iy, ix));
            }
          out.at(n, c, oy, ox) = best;
        }
  return out;
}

template <typename T>
Tensor<T> batch_norm_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps) {
  Tensor<T> out(x.shape());
  const double count = static_cast<double>(x.n() * x.h() * x.w());
  for (int64_t c = 0; c < x.c(); ++c) {
    double mean = 0, var = 0;
    for (int64_t n = 0; n < x.n(); ++n)
      for (int64_t y = 0; y < x.h(); ++y)
        for (int64_t xx = 0; xx < x.w(); ++xx) mean += x.at(n, c, y, xx);
    mean /= count;
    for (int64_t n = 0; n < x.n(); ++n)
      for (int64_t y = 0; y < x.h(); ++y)
        for (int64_t xx = 0; xx < x.w(); ++xx) var += (x.at(n, c, y, xx) - mean) * (x.at(n, c, y, xx) - mean);
    var /= count;
    for (int64_t n = 0; n < x.n(); ++n)
      for (int64_t y = 0; y < x.h(); ++y)
        for (int64_t xx = 0; xx < x.w(); ++xx)
          out.at(n, c, y, xx) =
              static_cast<T>(gamma[c] * (x.at(n, c, y, xx) - mean) / std::sqrt(var + eps) + beta[c]);
  }
  return out;
}

#define AFIU_INSTANTIATE_REFERENCE(T)                                                                          \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, const ConvParams&); \
  template void conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const ConvParams&,      \
                                Tensor<T>&, Tensor<T>&, Tensor<T>&);                                          \
  template Tensor<T> resize(const Tensor<T>&, int64_t, int64_t, Interp);                                      \
  template Tensor<T> max_pool(const Tensor<T>&, int, int, int);                                               \
  template Tensor<T> batch_norm_train(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);

AFIU_INSTANTIATE_REFERENCE(float)
AFIU_INSTANTIATE_REFERENCE(double)

}  // namespace afiu::reference
