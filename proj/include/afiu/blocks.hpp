// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

// Building blocks of the network: aggregate interaction (AIM), self
// interaction (SIM), fusion and residual-U (RSU) blocks. Each is a pure map
// from feature maps to feature maps given its parameters.

#pragma once

#include <string>
#include <vector>

#include "afiu/nn.hpp"

namespace afiu::blocks {

struct BlockSpec {
  std::vector<int64_t> in_channels;  // one entry per input
  int64_t out_channels = 64;
  int level = 1;       // pyramid level, 1 (shallowest) .. 5
  int rsu_depth = 2;   // RSU only
  bool dilated = false;  // RSU only: resolution-preserving inner U
  int64_t mid_channels = 0;  // RSU only: inner width, 0 = out_channels
};

enum class ResampleMode { image, mask };

/// Scales both spatial axes by 2^exponent. Image mode is bilinear with
/// half-pixel centres; mask mode is nearest with top-left anchoring.
/// Downsampling requires sizes divisible by the factor.
template <typename T>
Var<T> resample(const Var<T>& x, int exponent, ResampleMode mode);

template <typename T>
Tensor<T> resample(const Tensor<T>& x, int exponent, ResampleMode mode);

/// Combines 2-3 adjacent pyramid levels at the resolution of the current one:
/// every neighbour is resampled to the current size and reduced by a 3x3
/// convolution, the results are summed, then conv + BN + ReLU.
template <typename T>
class AimBlock {
 public:
  AimBlock() = default;
  AimBlock(nn::RegistryPtr<T> reg, const std::string& name, BlockSpec spec);

  Var<T> forward(const std::vector<Var<T>>& neighbors) const;

  /// Index of the level's own feature within its neighbour list.
  static size_t current_index(size_t count, int level);

 private:
  BlockSpec spec_;
  std::vector<nn::Conv2d<T>> reduce_;
  nn::ConvBnRelu<T> merge_;
};

/// Full- and half-resolution branches exchanging information by mutual
/// resampling + addition, then merged by addition at full resolution.
template <typename T>
class SimBlock {
 public:
  SimBlock() = default;
  SimBlock(nn::RegistryPtr<T> reg, const std::string& name, BlockSpec spec);

  Var<T> forward(const Var<T>& x) const;

  /// The full-resolution path alone: high_out(high_in(x)).
  Var<T> high_branch(const Var<T>& x) const;

  /// Name prefix shared by every half-resolution branch tensor.
  std::string low_prefix() const { return name_ + ".low_"; }

 private:
  std::string name_;
  BlockSpec spec_;
  nn::ConvBnRelu<T> high_in_, low_in_, high_out_, low_out_;
};

template <typename T>
class FuseBlock {
 public:
  FuseBlock() = default;
  FuseBlock(nn::RegistryPtr<T> reg, const std::string& name, BlockSpec spec);

  Var<T> forward(const Var<T>& x) const;

 private:
  BlockSpec spec_;
  nn::ConvBnRelu<T> conv_;
};

/// Residual U-block: out = T(x) + U(T(x)). T maps to out_channels; U is an
/// encoder-decoder of rsu_depth resolution stages (each halving the size) or,
/// when dilated, of rsu_depth stages with growing dilation at fixed size.
template <typename T>
class RsuBlock {
 public:
  RsuBlock() = default;
  RsuBlock(nn::RegistryPtr<T> reg, const std::string& name, BlockSpec spec);

  Var<T> forward(const Var<T>& x) const;
  Var<T> input_transform(const Var<T>& x) const;

  /// Name prefixes covering every inner-U tensor (everything but T).
  std::vector<std::string> inner_prefixes() const;
  const BlockSpec& spec() const { return spec_; }

  /// Spatial size of each inner encoder stage for an h x w input.
  std::vector<std::pair<int64_t, int64_t>> stage_sizes(int64_t h, int64_t w) const;

 private:
  void check_input(const Tensor<T>& x) const;

  std::string name_;
  BlockSpec spec_;
  nn::ConvBnRelu<T> in_;
  std::vector<nn::ConvBnRelu<T>> enc_;
  nn::ConvBnRelu<T> bottom_;
  std::vector<nn::ConvBnRelu<T>> dec_;
};

}  // namespace afiu::blocks
