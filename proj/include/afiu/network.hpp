// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "afiu/blocks.hpp"

namespace afiu {

enum class BackboneInit { random, pretrained };

/// Architecture record. Levels are 1-based (level x sits at stride 2^x).
struct AfiuConfig {
  int64_t input_height = 320;
  int64_t input_width = 320;
  int64_t interaction_width = 64;
  int64_t backbone_width = 64;              // stem width; pyramid widths are w, 4w, 8w, 16w, 32w
  std::array<int, 4> backbone_blocks{3, 4, 6, 3};  // bottlenecks per stage (50-layer layout)
  std::array<int, 5> rsu_depths{2, 2, 3, 4, 5};    // decoder depth per level
  std::set<int> dilated_levels{4, 5};
  BackboneInit backbone_init = BackboneInit::random;
  std::string backbone_weights;  // checkpoint holding backbone.* tensors when pretrained
  uint64_t init_seed = 0;
  /// Start each bottleneck as the identity by zeroing its last BN scale.
  bool zero_init_residual = true;

  /// Full-size profile: depth max(x,2) at level x, dilation chosen per level.
  static AfiuConfig standard(int64_t height = 320, int64_t width = 320);
  /// Desk-scale profile: width 8, backbone width 16, depths capped at 3, 64x64.
  static AfiuConfig tiny();

  /// Throws std::invalid_argument on any broken invariant.
  void validate() const;

  std::array<int64_t, 5> pyramid_channels() const;
  int64_t level_height(int level) const { return input_height >> level; }
  int64_t level_width(int level) const { return input_width >> level; }
};

/// Decoder levels whose feature is at most 16x16, or too small to halve
/// (depth - 1) times, run their RSU in dilated mode.
std::set<int> default_dilated_levels(int64_t height, int64_t width, const std::array<int, 5>& depths);

template <typename T>
struct BackbonePyramid {
  std::array<Var<T>, 5> levels;  // E1..E5

  const Var<T>& operator[](int level) const { return levels[static_cast<size_t>(level - 1)]; }
};

template <typename T>
using LevelFeatures = std::array<Var<T>, 5>;

/// 50-layer bottleneck residual network (stem + four stages) exposing the
/// five stride-2..32 feature maps.
template <typename T>
class Backbone {
 public:
  Backbone() = default;
  Backbone(nn::RegistryPtr<T> reg, const AfiuConfig& cfg);

  BackbonePyramid<T> forward(const Var<T>& image) const;

 private:
  struct Bottleneck {
    nn::ConvBnRelu<T> reduce, spatial, expand;
    bool has_shortcut = false;
    nn::ConvBnRelu<T> shortcut;
  };
  Var<T> bottleneck(const Bottleneck& b, const Var<T>& x) const;

  nn::ConvBnRelu<T> stem_;
  std::array<std::vector<Bottleneck>, 4> stages_;
};

/// The full model: backbone, per-level AIM -> SIM -> fuse encoder, stacked
/// RSU decoder and a 1x1 prediction head.
template <typename T>
class AfiuNet {
 public:
  explicit AfiuNet(AfiuConfig cfg);

  BackbonePyramid<T> backbone_extract(const Var<T>& image) const;
  LevelFeatures<T> encode(const BackbonePyramid<T>& pyramid) const;
  Var<T> decode(const LevelFeatures<T>& encoded) const;

  /// (N,3,H,W) image -> (N,1,H,W) map with every value in (0,1).
  Var<T> forward(const Var<T>& image) const;
  /// Inference without graph construction.
  Tensor<T> predict(const Tensor<T>& image) const;

  nn::Registry<T>& registry() { return *reg_; }
  const nn::Registry<T>& registry() const { return *reg_; }
  const AfiuConfig& config() const { return cfg_; }
  void set_training(bool on) { reg_->set_training(on); }

  const blocks::RsuBlock<T>& decoder_block(int level) const { return decoder_[static_cast<size_t>(level - 1)]; }
  const blocks::SimBlock<T>& sim_block(int level) const { return sim_[static_cast<size_t>(level - 1)]; }

 private:
  AfiuConfig cfg_;
  nn::RegistryPtr<T> reg_;
  Backbone<T> backbone_;
  std::array<blocks::AimBlock<T>, 5> aim_;
  std::array<blocks::SimBlock<T>, 5> sim_;
  std::array<blocks::FuseBlock<T>, 5> fuse_;
  std::array<blocks::RsuBlock<T>, 5> decoder_;
  nn::Conv2d<T> head_;
};

}  // namespace afiu
