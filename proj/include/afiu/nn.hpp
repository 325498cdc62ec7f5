// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <set>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "afiu/ops.hpp"

namespace afiu::nn {

template <typename T>
struct NamedVar {
  std::string name;
  Var<T> var;
};

/// Owns every named tensor of a model: trainable parameters and persistent
/// buffers (batch-norm running statistics). Also carries the train/eval flag
/// and the initialisation RNG shared by the modules built on it.
template <typename T>
class Registry {
 public:
  explicit Registry(uint64_t init_seed = 0) : rng_(init_seed) {}

  Var<T> add_parameter(const std::string& name, Tensor<T> init);
  Var<T> add_buffer(const std::string& name, Tensor<T> init);

  const std::vector<NamedVar<T>>& parameters() const { return parameters_; }
  const std::vector<NamedVar<T>>& buffers() const { return buffers_; }

  /// Parameters then buffers, in registration order.
  std::vector<NamedVar<T>> state() const;
  Var<T>* find(const std::string& name);

  bool training() const { return training_; }
  void set_training(bool on) { training_ = on; }
  ops::BatchNormOptions bn_options() const { return {training_, bn_momentum, bn_eps}; }

  void zero_grad();
  std::mt19937_64& rng() { return rng_; }

  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

 private:
  Var<T> add(std::vector<NamedVar<T>>& into, const std::string& name, Tensor<T> init, bool trainable);

  std::vector<NamedVar<T>> parameters_;
  std::vector<NamedVar<T>> buffers_;
  std::set<std::string> names_;
  bool training_ = true;
  std::mt19937_64 rng_;
};

template <typename T>
using RegistryPtr = std::shared_ptr<Registry<T>>;

struct ConvOptions {
  int64_t in_channels = 0;
  int64_t out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int padding = -1;  // -1: "same" padding for odd kernels at stride 1
  int dilation = 1;
  bool bias = true;
};

/// Fan-in scaled normal initialisation: std = sqrt(2 / (in * k * k)).
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(RegistryPtr<T> reg, const std::string& name, const ConvOptions& opt);

  Var<T> forward(const Var<T>& x) const;
  const Var<T>& weight() const { return weight_; }
  const Var<T>& bias() const { return bias_; }
  int64_t in_channels() const { return opt_.in_channels; }
  int64_t out_channels() const { return opt_.out_channels; }

 private:
  ConvOptions opt_;
  kernels::ConvParams params_;
  Var<T> weight_;
  Var<T> bias_;
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(RegistryPtr<T> reg, const std::string& name, int64_t channels);

  Var<T> forward(const Var<T>& x) const;

 private:
  RegistryPtr<T> reg_;
  Var<T> gamma_, beta_;
  Var<T> running_mean_, running_var_;
};

/// conv (no bias) -> batch norm -> optional ReLU.
template <typename T>
class ConvBnRelu {
 public:
  ConvBnRelu() = default;
  ConvBnRelu(RegistryPtr<T> reg, const std::string& name, ConvOptions opt, bool relu = true);

  Var<T> forward(const Var<T>& x) const;
  int64_t out_channels() const { return conv_.out_channels(); }

 private:
  Conv2d<T> conv_;
  BatchNorm2d<T> bn_;
  bool relu_ = true;
};

/// Sets every parameter and buffer whose name starts with `prefix` to `value`.
template <typename T>
void fill_with_prefix(Registry<T>& reg, const std::string& prefix, T value);

}  // namespace afiu::nn
