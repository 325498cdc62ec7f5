// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

// Image/mask corpora: directory ingestion, per-sample preprocessing with
// joint geometric augmentation, and a synthetic bokeh generator.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "afiu/tensor.hpp"

namespace afiu::data {

/// Interleaved 8-bit raster, row-major, channels last (RGB for images).
struct Image8 {
  int64_t height = 0;
  int64_t width = 0;
  int64_t channels = 0;
  std::vector<uint8_t> pixels;

  Image8() = default;
  Image8(int64_t h, int64_t w, int64_t c, uint8_t value = 0)
      : height(h), width(w), channels(c), pixels(static_cast<size_t>(h * w * c), value) {}

  uint8_t& at(int64_t y, int64_t x, int64_t c = 0) { return pixels[static_cast<size_t>((y * width + x) * channels + c)]; }
  uint8_t at(int64_t y, int64_t x, int64_t c = 0) const {
    return pixels[static_cast<size_t>((y * width + x) * channels + c)];
  }
  bool operator==(const Image8&) const = default;
};

/// Image plus binarised mask (values 0/1, 1 = source label >= 128).
struct Sample {
  std::string id;
  Image8 image;  // 3 channels
  Image8 mask;   // 1 channel
};

struct CorpusSpec {
  std::filesystem::path root;
  std::string image_dir = "images";
  std::string mask_dir = "masks";
};

/// RGB image from PNG/JPEG.
Image8 read_image(const std::filesystem::path& path);
/// Gray (1 channel) or RGB (3 channels) PNG.
void write_png(const std::filesystem::path& path, const Image8& image);

/// Labels >= 128 become 1, everything else 0.
Image8 binarize(const Image8& labels);
/// Inverse view of a binary mask as an 8-bit label image (0/255).
Image8 to_labels(const Image8& mask);

/// Pairs image and mask files by stem, sorted by stem. Images may be PNG or
/// JPEG, masks PNG. Throws std::runtime_error naming every unpaired stem or
/// unreadable file.
std::vector<Sample> load_corpus(const CorpusSpec& spec);

/// Writes PNGs under root/images and root/masks (masks as 0/255).
void write_corpus(const std::vector<Sample>& samples, const CorpusSpec& spec);

enum class FlipAxis { vertical, horizontal, none };

FlipAxis parse_flip_axis(const std::string& s);
std::string to_string(FlipAxis axis);

struct AugmentConfig {
  FlipAxis flip_axis = FlipAxis::vertical;  // vertical = top/bottom mirror
  double flip_probability = 0.5;
  double brightness = 0.2;  // factors drawn from [1 - r, 1 + r]
  double contrast = 0.2;
  double saturation = 0.2;
  int64_t target_height = 320;
  int64_t target_width = 320;

  /// Resize + normalise only.
  static AugmentConfig none(int64_t height, int64_t width);
  void validate() const;
};

/// Per-channel normalisation constants (RGB order).
inline constexpr float kImageMean[3] = {0.485f, 0.456f, 0.406f};
inline constexpr float kImageStd[3] = {0.229f, 0.224f, 0.225f};

struct Prepared {
  Tensor<float> image;  // (3,H,W), normalised
  Tensor<float> mask;   // (1,H,W), values 0/1
};

/// Resize (bilinear image, nearest mask), joint flip, colour jitter on the
/// image only, then normalisation. Fully determined by `rng_state`.
Prepared preprocess(const Sample& sample, const AugmentConfig& aug, uint64_t rng_state);

/// Independent stream for item `index` of a run seeded with `seed`.
uint64_t split_seed(uint64_t seed, uint64_t index);

struct Batch {
  Tensor<float> images;  // (N,3,H,W)
  Tensor<float> masks;   // (N,1,H,W)
};

/// Preprocesses `indices` in parallel; item i uses split_seed(stream, indices[i]).
Batch make_batch(const std::vector<Sample>& corpus, const std::vector<size_t>& indices, const AugmentConfig& aug,
                 uint64_t stream);

/// Image as an unnormalised (1,3,H,W) tensor in [0,1] and back.
Tensor<float> image_to_tensor(const Image8& image);
Image8 mask_from_tensor(const Tensor<float>& map);  // (1,1,H,W) or (1,H,W) in [0,1] -> 0..255

enum class SynthStyle {
  bokeh,    // sharp textured shapes over a blurred background, shared palette
  salient,  // as bokeh, but shapes also stand out in colour
};

SynthStyle parse_synth_style(const std::string& s);
std::string to_string(SynthStyle style);

/// `n` samples of 1-3 sharp polygons/ellipses composited over a Gaussian-
/// blurred texture; mask = the shapes. Foreground fraction is kept within
/// [0.05, 0.7] by rejection. Deterministic in (seed, size, style).
std::vector<Sample> synth_bokeh(int64_t n, uint64_t seed, int64_t height, int64_t width,
                                SynthStyle style = SynthStyle::bokeh);

}  // namespace afiu::data
