// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

#include "afiu/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace afiu::nn {

template <typename T>
Var<T> Registry<T>::add(std::vector<NamedVar<T>>& into, const std::string& name, Tensor<T> init, bool trainable) {
  if (!names_.insert(name).second) throw std::logic_error("duplicate tensor name '" + name + "'");
  Var<T> v(std::move(init), trainable);
  into.push_back({name, v});
  return v;
}

template <typename T>
Var<T> Registry<T>::add_parameter(const std::string& name, Tensor<T> init) {
  return add(parameters_, name, std::move(init), true);
}

template <typename T>
Var<T> Registry<T>::add_buffer(const std::string& name, Tensor<T> init) {
  return add(buffers_, name, std::move(init), false);
}

template <typename T>
std::vector<NamedVar<T>> Registry<T>::state() const {
  std::vector<NamedVar<T>> all = parameters_;
  all.insert(all.end(), buffers_.begin(), buffers_.end());
  return all;
}

template <typename T>
Var<T>* Registry<T>::find(const std::string& name) {
  for (auto& p : parameters_)
    if (p.name == name) return &p.var;
  for (auto& b : buffers_)
    if (b.name == name) return &b.var;
  return nullptr;
}

template <typename T>
void Registry<T>::zero_grad() {
  for (auto& p : parameters_) p.var.zero_grad();
}

template <typename T>
Conv2d<T>::Conv2d(RegistryPtr<T> reg, const std::string& name, const ConvOptions& opt) : opt_(opt) {
  if (opt.in_channels < 1 || opt.out_channels < 1 || opt.kernel < 1) {
    throw std::invalid_argument(name + ": channel counts and kernel size must be positive");
  }
  const int pad = opt.padding >= 0 ? opt.padding : opt.dilation * (opt.kernel - 1) / 2;
  params_ = {opt.stride, pad, opt.dilation};
  const int64_t fan_in = opt.in_channels * opt.kernel * opt.kernel;
  Tensor<T> w({opt.out_channels, opt.in_channels, opt.kernel, opt.kernel});
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (T& v : w.values()) v = static_cast<T>(dist(reg->rng()));
  weight_ = reg->add_parameter(name + ".weight", std::move(w));
  if (opt.bias) bias_ = reg->add_parameter(name + ".bias", Tensor<T>({opt.out_channels}));
}

template <typename T>
Var<T> Conv2d<T>::forward(const Var<T>& x) const {
  require_feature_map(x.value(), "conv2d");
  if (x.value().c() != opt_.in_channels) {
    throw std::invalid_argument("conv2d: expected " + std::to_string(opt_.in_channels) + " input channels, got " +
                                std::to_string(x.value().c()));
  }
  return ops::conv2d(x, weight_, bias_.defined() ? &bias_ : nullptr, params_);
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(RegistryPtr<T> reg, const std::string& name, int64_t channels) : reg_(std::move(reg)) {
  gamma_ = reg_->add_parameter(name + ".weight", Tensor<T>({channels}, T(1)));
  beta_ = reg_->add_parameter(name + ".bias", Tensor<T>({channels}));
  running_mean_ = reg_->add_buffer(name + ".running_mean", Tensor<T>({channels}));
  running_var_ = reg_->add_buffer(name + ".running_var", Tensor<T>({channels}, T(1)));
}

template <typename T>
Var<T> BatchNorm2d<T>::forward(const Var<T>& x) const {
  // Running statistics are registry-owned state; the handles alias them.
  Var<T> mean = running_mean_, var = running_var_;
  return ops::batch_norm(x, gamma_, beta_, mean.mutable_value(), var.mutable_value(), reg_->bn_options());
}

template <typename T>
ConvBnRelu<T>::ConvBnRelu(RegistryPtr<T> reg, const std::string& name, ConvOptions opt, bool relu) : relu_(relu) {
  opt.bias = false;
  conv_ = Conv2d<T>(reg, name + ".conv", opt);
  bn_ = BatchNorm2d<T>(reg, name + ".bn", opt.out_channels);
}

template <typename T>
Var<T> ConvBnRelu<T>::forward(const Var<T>& x) const {
  Var<T> y = bn_.forward(conv_.forward(x));
  return relu_ ? ops::relu(y) : y;
}

template <typename T>
void fill_with_prefix(Registry<T>& reg, const std::string& prefix, T value) {
  for (auto& nv : reg.state()) {
    if (nv.name.compare(0, prefix.size(), prefix) == 0) nv.var.mutable_value().fill(value);
  }
}

template class Registry<float>;
template class Registry<double>;
template class Conv2d<float>;
template class Conv2d<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template class ConvBnRelu<float>;
template class ConvBnRelu<double>;
template void fill_with_prefix(Registry<float>&, const std::string&, float);
template void fill_with_prefix(Registry<double>&, const std::string&, double);

}  // namespace afiu::nn
