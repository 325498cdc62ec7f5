// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

#include "afiu/blocks.hpp"

#include <stdexcept>

namespace afiu::blocks {

using kernels::Interp;

namespace {

std::string size_string(int64_t h, int64_t w) { return std::to_string(h) + "x" + std::to_string(w); }

template <typename T>
void require_channels(const Tensor<T>& x, int64_t expected, const std::string& what) {
  require_feature_map(x, what.c_str());
  if (x.c() != expected) {
    throw std::invalid_argument(what + ": expected " + std::to_string(expected) + " channels, got " +
                                std::to_string(x.c()));
  }
}

std::pair<int64_t, int64_t> resampled_size(int64_t h, int64_t w, int exponent) {
  if (exponent >= 0) return {h << exponent, w << exponent};
  const int64_t f = int64_t{1} << (-exponent);
  if (h % f != 0 || w % f != 0) {
    throw std::invalid_argument("resample: size " + size_string(h, w) + " not divisible by " + std::to_string(f));
  }
  return {h / f, w / f};
}

nn::ConvOptions conv3(int64_t in, int64_t out, int dilation = 1) {
  nn::ConvOptions o;
  o.in_channels = in;
  o.out_channels = out;
  o.kernel = 3;
  o.dilation = dilation;
  return o;
}

}  // namespace

template <typename T>
Var<T> resample(const Var<T>& x, int exponent, ResampleMode mode) {
  require_feature_map(x.value(), "resample");
  if (exponent == 0) return x;
  const auto [h, w] = resampled_size(x.value().h(), x.value().w(), exponent);
  return ops::resize(x, h, w, mode == ResampleMode::image ? Interp::bilinear : Interp::nearest);
}

template <typename T>
Tensor<T> resample(const Tensor<T>& x, int exponent, ResampleMode mode) {
  require_feature_map(x, "resample");
  if (exponent == 0) return x;
  const auto [h, w] = resampled_size(x.h(), x.w(), exponent);
  return kernels::resize_forward(x, h, w, mode == ResampleMode::image ? Interp::bilinear : Interp::nearest);
}

// ---------------------------------------------------------------- AIM

template <typename T>
size_t AimBlock<T>::current_index(size_t count, int level) {
  if (count == 2 && level == 1) return 0;
  if (count == 2 && level == 5) return 1;
  if (count == 3 && level > 1 && level < 5) return 1;
  throw std::invalid_argument("aim: level " + std::to_string(level) + " takes " +
                              std::string(level == 1 || level == 5 ? "2" : "3") + " neighbours, got " +
                              std::to_string(count));
}

template <typename T>
AimBlock<T>::AimBlock(nn::RegistryPtr<T> reg, const std::string& name, BlockSpec spec) : spec_(std::move(spec)) {
  if (spec_.level < 1 || spec_.level > 5) throw std::invalid_argument(name + ": level must be in [1,5]");
  current_index(spec_.in_channels.size(), spec_.level);
  for (size_t i = 0; i < spec_.in_channels.size(); ++i) {
    reduce_.emplace_back(reg, name + ".reduce" + std::to_string(i), conv3(spec_.in_channels[i], spec_.out_channels));
  }
  merge_ = nn::ConvBnRelu<T>(reg, name + ".merge", conv3(spec_.out_channels, spec_.out_channels));
}

template <typename T>
Var<T> AimBlock<T>::forward(const std::vector<Var<T>>& neighbors) const {
  if (neighbors.size() != 2 && neighbors.size() != 3) {
    throw std::invalid_argument("aim: expected 2 or 3 neighbours, got " + std::to_string(neighbors.size()));
  }
  if (neighbors.size() != spec_.in_channels.size()) {
    throw std::invalid_argument("aim: block built for " + std::to_string(spec_.in_channels.size()) +
                                " neighbours, got " + std::to_string(neighbors.size()));
  }
  for (size_t i = 0; i < neighbors.size(); ++i) {
    require_channels(neighbors[i].value(), spec_.in_channels[i], "aim neighbour " + std::to_string(i));
    if (i == 0) continue;
    const Tensor<T>& shallow = neighbors[i - 1].value();
    const Tensor<T>& deep = neighbors[i].value();
    if (shallow.h() != 2 * deep.h() || shallow.w() != 2 * deep.w() || shallow.n() != deep.n()) {
      throw std::invalid_argument("aim: neighbours " + std::to_string(i - 1) + " and " + std::to_string(i) +
                                  " are " + size_string(shallow.h(), shallow.w()) + " and " +
                                  size_string(deep.h(), deep.w()) + ", expected an exact x2 step");
    }
  }
  const auto cur = static_cast<int>(current_index(neighbors.size(), spec_.level));
  Var<T> acc;
  for (size_t i = 0; i < neighbors.size(); ++i) {
    // A deeper neighbour (larger index) is smaller and is upsampled.
    Var<T> aligned = resample(neighbors[i], static_cast<int>(i) - cur, ResampleMode::image);
    Var<T> reduced = reduce_[i].forward(aligned);
    acc = acc.defined() ? ops::add(acc, reduced) : reduced;
  }
  return merge_.forward(acc);
}

// ---------------------------------------------------------------- SIM

template <typename T>
SimBlock<T>::SimBlock(nn::RegistryPtr<T> reg, const std::string& name, BlockSpec spec)
    : name_(name), spec_(std::move(spec)) {
  if (spec_.in_channels.size() != 1) throw std::invalid_argument(name + ": SIM takes exactly one input");
  const int64_t in = spec_.in_channels[0], out = spec_.out_channels;
  high_in_ = nn::ConvBnRelu<T>(reg, name + ".high_in", conv3(in, out));
  low_in_ = nn::ConvBnRelu<T>(reg, name + ".low_in", conv3(in, out));
  high_out_ = nn::ConvBnRelu<T>(reg, name + ".high_out", conv3(out, out));
  low_out_ = nn::ConvBnRelu<T>(reg, name + ".low_out", conv3(out, out));
}

template <typename T>
Var<T> SimBlock<T>::forward(const Var<T>& x) const {
  require_channels(x.value(), spec_.in_channels[0], "sim");
  if (x.value().h() % 2 != 0 || x.value().w() % 2 != 0) {
    throw std::invalid_argument("sim: spatial size " + size_string(x.value().h(), x.value().w()) + " must be even");
  }
  Var<T> high = high_in_.forward(x);
  Var<T> low = low_in_.forward(resample(x, -1, ResampleMode::image));
  Var<T> high_mixed = ops::add(high, resample(low, 1, ResampleMode::image));
  Var<T> low_mixed = ops::add(low, resample(high, -1, ResampleMode::image));
  return ops::add(high_out_.forward(high_mixed), resample(low_out_.forward(low_mixed), 1, ResampleMode::image));
}

template <typename T>
Var<T> SimBlock<T>::high_branch(const Var<T>& x) const {
  require_channels(x.value(), spec_.in_channels[0], "sim");
  return high_out_.forward(high_in_.forward(x));
}

// ---------------------------------------------------------------- fuse

template <typename T>
FuseBlock<T>::FuseBlock(nn::RegistryPtr<T> reg, const std::string& name, BlockSpec spec) : spec_(std::move(spec)) {
  if (spec_.in_channels.size() != 1) throw std::invalid_argument(name + ": fuse takes exactly one input");
  conv_ = nn::ConvBnRelu<T>(reg, name + ".conv", conv3(spec_.in_channels[0], spec_.out_channels));
}

template <typename T>
Var<T> FuseBlock<T>::forward(const Var<T>& x) const {
  require_channels(x.value(), spec_.in_channels[0], "fuse");
  return conv_.forward(x);
}

// ---------------------------------------------------------------- RSU

template <typename T>
RsuBlock<T>::RsuBlock(nn::RegistryPtr<T> reg, const std::string& name, BlockSpec spec)
    : name_(name), spec_(std::move(spec)) {
  if (spec_.in_channels.size() != 1) throw std::invalid_argument(name + ": RSU takes exactly one input");
  if (spec_.rsu_depth < 2) {
    throw std::invalid_argument(name + ": rsu_depth must be >= 2, got " + std::to_string(spec_.rsu_depth));
  }
  const int depth = spec_.rsu_depth;
  const int64_t out = spec_.out_channels;
  const int64_t mid = spec_.mid_channels > 0 ? spec_.mid_channels : out;
  in_ = nn::ConvBnRelu<T>(reg, name + ".in", conv3(spec_.in_channels[0], out));
  for (int i = 0; i < depth; ++i) {
    const int dilation = spec_.dilated ? (1 << i) : 1;
    enc_.emplace_back(reg, name + ".enc" + std::to_string(i), conv3(i == 0 ? out : mid, mid, dilation));
  }
  bottom_ = nn::ConvBnRelu<T>(reg, name + ".bottom", conv3(mid, mid, spec_.dilated ? (1 << depth) : 2));
  for (int i = 0; i < depth; ++i) {
    dec_.emplace_back(reg, name + ".dec" + std::to_string(i), conv3(2 * mid, i == 0 ? out : mid));
  }
}

template <typename T>
void RsuBlock<T>::check_input(const Tensor<T>& x) const {
  require_channels(x, spec_.in_channels[0], name_);
  if (spec_.dilated) return;
  const int64_t f = int64_t{1} << (spec_.rsu_depth - 1);
  if (x.h() % f != 0 || x.w() % f != 0) {
    throw std::invalid_argument(name_ + ": size " + size_string(x.h(), x.w()) + " not divisible by " +
                                std::to_string(f) + " as depth " + std::to_string(spec_.rsu_depth) + " requires");
  }
}

template <typename T>
Var<T> RsuBlock<T>::input_transform(const Var<T>& x) const {
  check_input(x.value());
  return in_.forward(x);
}

template <typename T>
Var<T> RsuBlock<T>::forward(const Var<T>& x) const {
  const Var<T> top = input_transform(x);
  const int depth = spec_.rsu_depth;
  std::vector<Var<T>> skips;
  skips.reserve(depth);
  Var<T> h = top;
  for (int i = 0; i < depth; ++i) {
    if (i > 0 && !spec_.dilated) h = resample(h, -1, ResampleMode::image);
    h = enc_[i].forward(h);
    skips.push_back(h);
  }
  Var<T> d = bottom_.forward(h);
  for (int i = depth - 1; i >= 0; --i) {
    if (i < depth - 1 && !spec_.dilated) d = resample(d, 1, ResampleMode::image);
    d = dec_[i].forward(ops::concat_channels<T>({d, skips[i]}));
  }
  return ops::add(top, d);
}

template <typename T>
std::vector<std::pair<int64_t, int64_t>> RsuBlock<T>::stage_sizes(int64_t h, int64_t w) const {
  std::vector<std::pair<int64_t, int64_t>> out;
  for (int i = 0; i < spec_.rsu_depth; ++i) {
    out.emplace_back(h, w);
    if (!spec_.dilated) {
      h /= 2;
      w /= 2;
    }
  }
  return out;
}

template <typename T>
std::vector<std::string> RsuBlock<T>::inner_prefixes() const {
  return {name_ + ".enc", name_ + ".bottom", name_ + ".dec"};
}

#define AFIU_INSTANTIATE_BLOCKS(T)                                 \
  template Var<T> resample(const Var<T>&, int, ResampleMode);      \
  template Tensor<T> resample(const Tensor<T>&, int, ResampleMode); \
  template class AimBlock<T>;                                      \
  template class SimBlock<T>;                                      \
  template class FuseBlock<T>;                                     \
  template class RsuBlock<T>;

AFIU_INSTANTIATE_BLOCKS(float)
AFIU_INSTANTIATE_BLOCKS(double)

}  // namespace afiu::blocks
