// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

#include "afiu/network.hpp"

#include "afiu/checkpoint.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace afiu {

using blocks::BlockSpec;
using blocks::ResampleMode;

std::set<int> default_dilated_levels(int64_t height, int64_t width, const std::array<int, 5>& depths) {
  std::set<int> out;
  for (int level = 1; level <= 5; ++level) {
    const int64_t h = height >> level, w = width >> level;
    const int64_t f = int64_t{1} << (depths[level - 1] - 1);
    if (std::min(h, w) <= 16 || h % f != 0 || w % f != 0) out.insert(level);
  }
  return out;
}

AfiuConfig AfiuConfig::standard(int64_t height, int64_t width) {
  AfiuConfig c;
  c.input_height = height;
  c.input_width = width;
  for (int level = 1; level <= 5; ++level) c.rsu_depths[level - 1] = std::max(level, 2);
  c.dilated_levels = default_dilated_levels(height, width, c.rsu_depths);
  return c;
}

AfiuConfig AfiuConfig::tiny() {
  AfiuConfig c = standard(64, 64);
  c.interaction_width = 8;
  c.backbone_width = 16;
  for (int& d : c.rsu_depths) d = std::min(d, 3);
  c.dilated_levels = default_dilated_levels(64, 64, c.rsu_depths);
  return c;
}

void AfiuConfig::validate() const {
  if (input_height < 32 || input_width < 32 || input_height % 32 != 0 || input_width % 32 != 0) {
    throw std::invalid_argument("config: input size " + std::to_string(input_height) + "x" +
                                std::to_string(input_width) + " must be a positive multiple of 32");
  }
  if (interaction_width < 1) throw std::invalid_argument("config: interaction_width must be positive");
  if (backbone_width < 1) throw std::invalid_argument("config: backbone_width must be positive");
  for (int b : backbone_blocks)
    if (b < 1) throw std::invalid_argument("config: every backbone stage needs at least one block");
  for (int level = 1; level <= 5; ++level) {
    const int depth = rsu_depths[level - 1];
    if (depth < 2) {
      throw std::invalid_argument("config: rsu depth at level " + std::to_string(level) + " is " +
                                  std::to_string(depth) + ", must be >= 2");
    }
    if (dilated_levels.count(level)) continue;
    const int64_t f = int64_t{1} << (depth - 1);
    if (level_height(level) % f != 0 || level_width(level) % f != 0) {
      throw std::invalid_argument("config: level " + std::to_string(level) + " feature " +
                                  std::to_string(level_height(level)) + "x" + std::to_string(level_width(level)) +
                                  " cannot be halved " + std::to_string(depth - 1) +
                                  " times; mark the level dilated");
    }
  }
  for (int level : dilated_levels)
    if (level < 1 || level > 5) throw std::invalid_argument("config: dilated level out of [1,5]");
  if (backbone_init == BackboneInit::pretrained && backbone_weights.empty()) {
    throw std::invalid_argument("config: pretrained backbone requested without a weights file");
  }
}

std::array<int64_t, 5> AfiuConfig::pyramid_channels() const {
  const int64_t w = backbone_width;
  return {w, 4 * w, 8 * w, 16 * w, 32 * w};
}

// ---------------------------------------------------------------- backbone

namespace {

nn::ConvOptions conv_opt(int64_t in, int64_t out, int kernel, int stride = 1) {
  nn::ConvOptions o;
  o.in_channels = in;
  o.out_channels = out;
  o.kernel = kernel;
  o.stride = stride;
  o.padding = kernel / 2;
  return o;
}

}  // namespace

template <typename T>
Backbone<T>::Backbone(nn::RegistryPtr<T> reg, const AfiuConfig& cfg) {
  const int64_t base = cfg.backbone_width;
  stem_ = nn::ConvBnRelu<T>(reg, "backbone.stem", conv_opt(3, base, 7, 2));
  int64_t in = base;
  for (int s = 0; s < 4; ++s) {
    const int64_t planes = base << s;
    const int64_t out = planes * 4;
    for (int b = 0; b < cfg.backbone_blocks[s]; ++b) {
      const int stride = (b == 0 && s > 0) ? 2 : 1;
      const std::string name = "backbone.layer" + std::to_string(s + 1) + "." + std::to_string(b);
      Bottleneck block;
      block.reduce = nn::ConvBnRelu<T>(reg, name + ".reduce", conv_opt(in, planes, 1));
      block.spatial = nn::ConvBnRelu<T>(reg, name + ".spatial", conv_opt(planes, planes, 3, stride));
      block.expand = nn::ConvBnRelu<T>(reg, name + ".expand", conv_opt(planes, out, 1), false);
      if (cfg.zero_init_residual) nn::fill_with_prefix(*reg, name + ".expand.bn.weight", T(0));
      block.has_shortcut = stride != 1 || in != out;
      if (block.has_shortcut) {
        block.shortcut = nn::ConvBnRelu<T>(reg, name + ".shortcut", conv_opt(in, out, 1, stride), false);
      }
      stages_[s].push_back(std::move(block));
      in = out;
    }
  }
}

template <typename T>
Var<T> Backbone<T>::bottleneck(const Bottleneck& b, const Var<T>& x) const {
  Var<T> y = b.expand.forward(b.spatial.forward(b.reduce.forward(x)));
  return ops::relu(ops::add(y, b.has_shortcut ? b.shortcut.forward(x) : x));
}

template <typename T>
BackbonePyramid<T> Backbone<T>::forward(const Var<T>& image) const {
  BackbonePyramid<T> pyr;
  pyr.levels[0] = stem_.forward(image);
  Var<T> x = ops::max_pool(pyr.levels[0], 3, 2, 1);
  for (int s = 0; s < 4; ++s) {
    for (const Bottleneck& b : stages_[s]) x = bottleneck(b, x);
    pyr.levels[s + 1] = x;
  }
  return pyr;
}

// ---------------------------------------------------------------- model

template <typename T>
AfiuNet<T>::AfiuNet(AfiuConfig cfg) : cfg_(std::move(cfg)), reg_(std::make_shared<nn::Registry<T>>(cfg_.init_seed)) {
  cfg_.validate();
  backbone_ = Backbone<T>(reg_, cfg_);
  const auto widths = cfg_.pyramid_channels();
  const int64_t w = cfg_.interaction_width;
  for (int level = 1; level <= 5; ++level) {
    const std::string tag = std::to_string(level);
    BlockSpec aim;
    aim.level = level;
    aim.out_channels = w;
    for (int l = std::max(1, level - 1); l <= std::min(5, level + 1); ++l) aim.in_channels.push_back(widths[l - 1]);
    aim_[level - 1] = blocks::AimBlock<T>(reg_, "encoder.aim" + tag, aim);

    BlockSpec same;
    same.level = level;
    same.in_channels = {w};
    same.out_channels = w;
    sim_[level - 1] = blocks::SimBlock<T>(reg_, "encoder.sim" + tag, same);
    fuse_[level - 1] = blocks::FuseBlock<T>(reg_, "encoder.fuse" + tag, same);

    BlockSpec rsu = same;
    rsu.in_channels = {level == 5 ? w : 2 * w};
    rsu.rsu_depth = cfg_.rsu_depths[level - 1];
    rsu.dilated = cfg_.dilated_levels.count(level) > 0;
    decoder_[level - 1] = blocks::RsuBlock<T>(reg_, "decoder.rsu" + tag, rsu);
  }
  nn::ConvOptions head;
  head.in_channels = w;
  head.out_channels = 1;
  head.kernel = 1;
  head_ = nn::Conv2d<T>(reg_, "head", head);
  if (cfg_.backbone_init == BackboneInit::pretrained) {
    restore_prefix(*reg_, read_checkpoint(cfg_.backbone_weights), "backbone.");
  }
}

template <typename T>
BackbonePyramid<T> AfiuNet<T>::backbone_extract(const Var<T>& image) const {
  const Tensor<T>& x = image.value();
  require_feature_map(x, "backbone");
  if (x.c() != 3) throw std::invalid_argument("backbone: expected 3 input channels, got " + std::to_string(x.c()));
  if (x.h() % 32 != 0 || x.w() % 32 != 0) {
    throw std::invalid_argument("backbone: input " + std::to_string(x.h()) + "x" + std::to_string(x.w()) +
                                " is not divisible by 32");
  }
  return backbone_.forward(image);
}

template <typename T>
LevelFeatures<T> AfiuNet<T>::encode(const BackbonePyramid<T>& pyr) const {
  LevelFeatures<T> out;
  for (int level = 1; level <= 5; ++level) {
    std::vector<Var<T>> neighbors;
    for (int l = std::max(1, level - 1); l <= std::min(5, level + 1); ++l) neighbors.push_back(pyr[l]);
    Var<T> a = aim_[level - 1].forward(neighbors);
    out[level - 1] = fuse_[level - 1].forward(sim_[level - 1].forward(a));
  }
  return out;
}

template <typename T>
Var<T> AfiuNet<T>::decode(const LevelFeatures<T>& ec) const {
  for (const Var<T>& e : ec) {
    if (!e.defined() || e.value().c() != cfg_.interaction_width) {
      throw std::invalid_argument("decode: encoder outputs must have " + std::to_string(cfg_.interaction_width) +
                                  " channels");
    }
  }
  Var<T> d = decoder_[4].forward(ec[4]);
  for (int level = 4; level >= 1; --level) {
    Var<T> up = blocks::resample(d, 1, ResampleMode::image);
    d = decoder_[level - 1].forward(ops::concat_channels<T>({ec[level - 1], up}));
  }
  return d;
}

template <typename T>
Var<T> AfiuNet<T>::forward(const Var<T>& image) const {
  Var<T> d1 = decode(encode(backbone_extract(image)));
  Var<T> prob = ops::sigmoid(head_.forward(d1));
  Var<T> full = blocks::resample(prob, 1, ResampleMode::image);
  // Keep the open-interval range law exact in finite precision.
  return ops::clamp(full, std::numeric_limits<T>::min(), std::nextafter(T(1), T(0)));
}

template <typename T>
Tensor<T> AfiuNet<T>::predict(const Tensor<T>& image) const {
  NoGradGuard guard;
  return forward(Var<T>(image)).value();
}

template class Backbone<float>;
template class Backbone<double>;
template class AfiuNet<float>;
template class AfiuNet<double>;

}  // namespace afiu
