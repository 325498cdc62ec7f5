// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

// Serial, loop-per-definition versions of the compute kernels. Slow; kept for
// cross-checking the parallel kernels and as the benchmark baseline.

#pragma once

#include "afiu/kernels.hpp"

namespace afiu::reference {

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                         const kernels::ConvParams& p);

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_out,
                     const kernels::ConvParams& p, Tensor<T>& grad_x, Tensor<T>& grad_weight, Tensor<T>& grad_bias);

template <typename T>
Tensor<T> resize(const Tensor<T>& x, int64_t out_h, int64_t out_w, kernels::Interp mode);

template <typename T>
Tensor<T> max_pool(const Tensor<T>& x, int kernel, int stride, int padding);

template <typename T>
Tensor<T> batch_norm_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps);

}  // namespace afiu::reference
