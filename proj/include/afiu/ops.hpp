// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "afiu/autograd.hpp"
#include "afiu/kernels.hpp"

namespace afiu::ops {

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>* bias, const kernels::ConvParams& p);

struct BatchNormOptions {
  bool training = true;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// In training mode the running statistics are updated in place (unbiased
/// variance, exponential average with `momentum`).
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, const BatchNormOptions& opt);

template <typename T>
Var<T> relu(const Var<T>& x);

template <typename T>
Var<T> sigmoid(const Var<T>& x);

/// Clamps into [lo, hi]; gradient passes only where the input was inside.
template <typename T>
Var<T> clamp(const Var<T>& x, T lo, T hi);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts);

template <typename T>
Var<T> resize(const Var<T>& x, int64_t out_h, int64_t out_w, kernels::Interp mode);

template <typename T>
Var<T> max_pool(const Var<T>& x, int kernel, int stride, int padding);

template <typename T>
Var<T> sum(const Var<T>& x);

template <typename T>
Var<T> mean(const Var<T>& x);

/// While alive, folds every piecewise branch taken on this thread (ReLU
/// signs, clamp saturation, max-pool winners) into a digest. Two forward
/// passes with equal digests lie on the same smooth piece of the network.
class BranchRecorder {
 public:
  BranchRecorder();
  ~BranchRecorder();
  BranchRecorder(const BranchRecorder&) = delete;
  BranchRecorder& operator=(const BranchRecorder&) = delete;

  uint64_t digest() const { return digest_; }
  void record(uint64_t word);

 private:
  BranchRecorder* previous_;
  uint64_t digest_ = 14695981039346656037ull;
};

}  // namespace afiu::ops
