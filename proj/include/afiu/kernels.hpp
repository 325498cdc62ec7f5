// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

// OpenMP-parallel compute kernels. Each kernel has a plain serial twin in
// reference.hpp that the tests and benchmarks compare against.

#pragma once

#include <cstdint>
#include <vector>

#include "afiu/tensor.hpp"

namespace afiu::kernels {

struct ConvParams {
  int stride = 1;
  int padding = 0;
  int dilation = 1;
};

/// Thread count for both the OpenMP kernels and the BLAS backend. A count of
/// 1 gives bitwise-reproducible results.
void set_num_threads(int n);

int64_t conv_out_extent(int64_t in, int64_t kernel, const ConvParams& p);

/// C = alpha * op(A) * op(B) + beta * C, row-major.
template <typename T>
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, T alpha, const T* a, int64_t lda,
          const T* b, int64_t ldb, T beta, T* c, int64_t ldc);

/// x: (N,Cin,H,W), weight: (Cout,Cin,kh,kw), bias: (Cout) or null.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias, const ConvParams& p);

/// Accumulates into whichever of grad_x / grad_weight / grad_bias are non-null.
/// Targets must already have the matching shapes.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_out, const ConvParams& p,
                     Tensor<T>* grad_x, Tensor<T>* grad_weight, Tensor<T>* grad_bias);

enum class Interp { bilinear, nearest };

/// Bilinear uses half-pixel centres (corner alignment off) with edge clamping;
/// nearest takes src = floor(dst * in / out), i.e. the top-left sample of each cell.
template <typename T>
Tensor<T> resize_forward(const Tensor<T>& x, int64_t out_h, int64_t out_w, Interp mode);

template <typename T>
Tensor<T> resize_backward(const Tensor<T>& grad_out, int64_t in_h, int64_t in_w, Interp mode);

template <typename T>
struct MaxPoolResult {
  Tensor<T> out;
  std::vector<int64_t> argmax;  // flat index into the input plane, per output element
};

template <typename T>
MaxPoolResult<T> max_pool_forward(const Tensor<T>& x, int kernel, int stride, int padding);

template <typename T>
Tensor<T> max_pool_backward(const Tensor<T>& grad_out, const std::vector<int64_t>& argmax, const Shape& in_shape);

/// Training-mode batch normalisation. Writes the per-channel batch mean and
/// biased variance so the caller can update running statistics, and the
/// normalised input x_hat needed by the backward pass.
template <typename T>
Tensor<T> batch_norm_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps,
                           std::vector<double>& mean, std::vector<double>& var, Tensor<T>& x_hat);

template <typename T>
Tensor<T> batch_norm_eval(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          const Tensor<T>& running_mean, const Tensor<T>& running_var, double eps, Tensor<T>* x_hat);

/// batch_stats selects the training-mode gradient (statistics depend on x).
/// inv_std holds 1/sqrt(var + eps) per channel.
template <typename T>
void batch_norm_backward(const Tensor<T>& grad_out, const Tensor<T>& x_hat, const Tensor<T>& gamma,
                         const std::vector<double>& inv_std, bool batch_stats, Tensor<T>* grad_x,
                         Tensor<T>* grad_gamma, Tensor<T>* grad_beta);

template <typename T>
void relu_forward(const T* x, T* y, int64_t n);
template <typename T>
void relu_backward(const T* y, const T* grad_out, T* grad_x, int64_t n);
template <typename T>
void sigmoid_forward(const T* x, T* y, int64_t n);
template <typename T>
void add_into(T* dst, const T* src, int64_t n);

/// Concatenate along channels.
template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts);

}  // namespace afiu::kernels
