// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>

#include "afiu/data.hpp"
#include "test_util.hpp"

using namespace afiu;
using namespace afiu::data;
using afiu::testing::TempDir;

namespace {

Sample solid_sample(const std::string& id, int64_t h, int64_t w, uint8_t shade) {
  Sample s;
  s.id = id;
  s.image = Image8(h, w, 3, shade);
  s.mask = Image8(h, w, 1, 0);
  s.mask.at(0, 0) = 1;
  return s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Mean |4-neighbour Laplacian| of the luma inside and outside the mask,
// over interior pixels whose 3x3 neighbourhood is entirely on one side.
std::pair<double, double> laplacian_energy(const Sample& s) {
  const int64_t h = s.image.height, w = s.image.width;
  auto luma = [&](int64_t y, int64_t x) {
    return 0.299 * s.image.at(y, x, 0) + 0.587 * s.image.at(y, x, 1) + 0.114 * s.image.at(y, x, 2);
  };
  double in = 0, out = 0;
  int64_t n_in = 0, n_out = 0;
  for (int64_t y = 1; y + 1 < h; ++y) {
    for (int64_t x = 1; x + 1 < w; ++x) {
      int label_sum = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) label_sum += s.mask.at(y + dy, x + dx);
      if (label_sum != 0 && label_sum != 9) continue;
      const double lap =
          std::abs(luma(y - 1, x) + luma(y + 1, x) + luma(y, x - 1) + luma(y, x + 1) - 4 * luma(y, x));
      if (label_sum == 9) {
        in += lap;
        ++n_in;
      } else {
        out += lap;
        ++n_out;
      }
    }
  }
  return {n_in ? in / n_in : 0.0, n_out ? out / n_out : 0.0};
}

}  // namespace

// ---------------------------------------------------------------- masks

TEST(Binarize, ThresholdAt128) {
  Image8 labels(1, 5, 1);
  labels.pixels = {0, 100, 127, 128, 200};
  EXPECT_EQ(binarize(labels).pixels, (std::vector<uint8_t>{0, 0, 0, 1, 1}));
}

TEST(Binarize, StableThroughLabelRoundTrip) {
  std::mt19937_64 rng(1);
  Image8 labels(7, 9, 1);
  for (auto& v : labels.pixels) v = static_cast<uint8_t>(rng());
  const Image8 once = binarize(labels);
  EXPECT_EQ(binarize(to_labels(once)), once);
}

// ---------------------------------------------------------------- corpora

TEST(Corpus, LoadsPairsInLexicographicOrder) {
  TempDir dir("corpus");
  const std::vector<Sample> samples = {solid_sample("b", 8, 6, 10), solid_sample("a", 8, 6, 20),
                                       solid_sample("c10", 5, 4, 30)};
  write_corpus(samples, {dir.path()});
  const auto loaded = load_corpus({dir.path()});
  ASSERT_EQ(loaded.size(), 3u);
  EXPECT_EQ(loaded[0].id, "a");
  EXPECT_EQ(loaded[1].id, "b");
  EXPECT_EQ(loaded[2].id, "c10");
  EXPECT_EQ(loaded[0].image, samples[1].image);
  EXPECT_EQ(loaded[0].mask, samples[1].mask);
  EXPECT_EQ(loaded[2].image.height, 5);
}

TEST(Corpus, BinarisesMaskLabels) {
  TempDir dir("labels"), scratch("labels-src");
  write_corpus({solid_sample("x", 1, 2, 0)}, {dir.path()});
  // A grey PNG with levels either side of the threshold replaces the mask.
  Sample grey = solid_sample("x", 1, 2, 0);
  grey.image.pixels = {200, 200, 200, 100, 100, 100};
  write_corpus({grey}, {scratch.path()});
  std::filesystem::copy_file(scratch / "images/x.png", dir / "masks/x.png",
                             std::filesystem::copy_options::overwrite_existing);
  EXPECT_EQ(load_corpus({dir.path()})[0].mask.pixels, (std::vector<uint8_t>{1, 0}));
}

TEST(Corpus, UnpairedFilesAreNamed) {
  TempDir dir("unpaired");
  write_corpus({solid_sample("keep", 4, 4, 1), solid_sample("lonely", 4, 4, 2)}, {dir.path()});
  std::filesystem::remove(dir / "masks/lonely.png");
  try {
    load_corpus({dir.path()});
    FAIL() << "expected an unpaired error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("lonely (no mask)"), std::string::npos) << e.what();
  }
  std::filesystem::remove(dir / "images/lonely.png");
  std::filesystem::remove(dir / "images/keep.png");
  EXPECT_THROW(load_corpus({dir.path()}), std::runtime_error);
}

TEST(Corpus, UnreadableAndMissingInputsFail) {
  TempDir dir("broken");
  EXPECT_THROW(load_corpus({dir / "absent"}), std::runtime_error);
  write_corpus({solid_sample("a", 4, 4, 1)}, {dir.path()});
  std::ofstream(dir / "images/a.png", std::ios::trunc) << "garbage";
  try {
    load_corpus({dir.path()});
    FAIL() << "expected a read error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("a.png"), std::string::npos) << e.what();
  }
}

// ---------------------------------------------------------------- preprocessing

TEST(Preprocess, ResizesToTarget) {
  Sample s = solid_sample("big", 480, 640, 128);
  AugmentConfig aug;
  const auto p = preprocess(s, aug, 7);
  EXPECT_EQ(p.image.shape(), (Shape{3, 320, 320}));
  EXPECT_EQ(p.mask.shape(), (Shape{1, 320, 320}));
  for (float v : p.mask.values()) EXPECT_TRUE(v == 0.0f || v == 1.0f);
}

TEST(Preprocess, NormalisesPerChannel) {
  Sample s = solid_sample("n", 32, 32, 255);
  const auto p = preprocess(s, AugmentConfig::none(32, 32), 0);
  for (int c = 0; c < 3; ++c) EXPECT_FLOAT_EQ(p.image[c * 32 * 32], (1.0f - kImageMean[c]) / kImageStd[c]);
}

TEST(Preprocess, NoRandomnessWithoutFlipOrJitter) {
  std::mt19937_64 rng(2);
  Sample s = synth_bokeh(1, 3, 64, 64)[0];
  const AugmentConfig aug = AugmentConfig::none(64, 64);
  const auto a = preprocess(s, aug, rng()), b = preprocess(s, aug, rng());
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.mask, b.mask);
}

TEST(Preprocess, FlipMovesMarkedCornerInImageAndMask) {
  Sample s = solid_sample("corner", 32, 32, 0);
  s.image.at(0, 0, 0) = 255;
  for (auto [axis, y, x] : {std::tuple{FlipAxis::vertical, 31, 0}, std::tuple{FlipAxis::horizontal, 0, 31}}) {
    AugmentConfig aug = AugmentConfig::none(32, 32);
    aug.flip_axis = axis;
    aug.flip_probability = 1.0;
    const auto p = preprocess(s, aug, 0);
    const float hot = (1.0f - kImageMean[0]) / kImageStd[0];
    EXPECT_FLOAT_EQ(p.image[y * 32 + x], hot) << to_string(axis);
    EXPECT_EQ(p.mask[y * 32 + x], 1.0f) << to_string(axis);
    EXPECT_EQ(p.mask[0], 0.0f);
    float total = 0;
    for (float v : p.mask.values()) total += v;
    EXPECT_EQ(total, 1.0f);
  }
}

TEST(Preprocess, JitterNeverTouchesTheMask) {
  const auto corpus = synth_bokeh(4, 5, 64, 64);
  AugmentConfig plain = AugmentConfig::none(64, 64);
  plain.flip_axis = FlipAxis::vertical;
  plain.flip_probability = 0.5;
  AugmentConfig jittered = plain;
  jittered.brightness = jittered.contrast = jittered.saturation = 0.2;
  for (uint64_t seed = 0; seed < 16; ++seed) {
    const auto& s = corpus[seed % 4];
    const auto a = preprocess(s, plain, seed), b = preprocess(s, jittered, seed);
    EXPECT_EQ(a.mask, b.mask);
  }
  EXPECT_NE(preprocess(corpus[0], jittered, 1).image, preprocess(corpus[0], plain, 1).image);
}

TEST(Preprocess, FlipFrequencyFollowsProbability) {
  Sample s = solid_sample("f", 32, 32, 0);
  AugmentConfig aug = AugmentConfig::none(32, 32);
  aug.flip_axis = FlipAxis::horizontal;
  aug.flip_probability = 0.5;
  int flipped = 0;
  for (uint64_t i = 0; i < 400; ++i) flipped += preprocess(s, aug, split_seed(9, i)).mask[31] == 1.0f;
  EXPECT_GT(flipped, 150);
  EXPECT_LT(flipped, 250);
}

TEST(Preprocess, ConfigValidation) {
  AugmentConfig aug;
  EXPECT_NO_THROW(aug.validate());
  aug.flip_probability = 1.5;
  EXPECT_THROW(aug.validate(), std::invalid_argument);
  aug = AugmentConfig{};
  aug.target_height = 100;
  EXPECT_THROW(aug.validate(), std::invalid_argument);
  EXPECT_EQ(parse_flip_axis("horizontal"), FlipAxis::horizontal);
  EXPECT_THROW(parse_flip_axis("diagonal"), std::invalid_argument);
}

TEST(Batches, ItemsDependOnlyOnTheirIndex) {
  const auto corpus = synth_bokeh(5, 11, 64, 64);
  AugmentConfig aug;
  aug.target_height = aug.target_width = 64;
  const auto batch = make_batch(corpus, {3, 1}, aug, 77);
  EXPECT_EQ(batch.images.shape(), (Shape{2, 3, 64, 64}));
  const auto item = preprocess(corpus[1], aug, split_seed(77, 1));
  for (int64_t i = 0; i < item.image.numel(); ++i) ASSERT_EQ(batch.images[3 * 64 * 64 + i], item.image[i]);
  for (int64_t i = 0; i < item.mask.numel(); ++i) ASSERT_EQ(batch.masks[64 * 64 + i], item.mask[i]);
}

TEST(MaskExport, RoundsHalfToEven) {
  Tensor<float> m({1, 1, 1, 4}, {0.0f, 0.5f, 1.0f, 1.2f});
  EXPECT_EQ(mask_from_tensor(m).pixels, (std::vector<uint8_t>{0, 128, 255, 255}));
}

// ---------------------------------------------------------------- synthesis

TEST(Synth, DeterministicInSeed) {
  const auto a = synth_bokeh(8, 0, 64, 64), b = synth_bokeh(8, 0, 64, 64);
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id, b[i].id);
    EXPECT_EQ(a[i].image, b[i].image);
    EXPECT_EQ(a[i].mask, b[i].mask);
  }
  EXPECT_NE(synth_bokeh(1, 1, 64, 64)[0].image, a[0].image);
}

TEST(Synth, FilesAreBitwiseReproducible) {
  TempDir x("synth-x"), y("synth-y");
  write_corpus(synth_bokeh(8, 0, 64, 64), {x.path()});
  write_corpus(synth_bokeh(8, 0, 64, 64), {y.path()});
  for (const auto& entry : std::filesystem::recursive_directory_iterator(x.path())) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), x.path());
    EXPECT_EQ(slurp(entry.path()), slurp(y.path() / rel)) << rel;
  }
  const auto reloaded = load_corpus({x.path()});
  const auto fresh = synth_bokeh(8, 0, 64, 64);
  ASSERT_EQ(reloaded.size(), 8u);
  for (size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(reloaded[i].image, fresh[i].image);
    EXPECT_EQ(reloaded[i].mask, fresh[i].mask);
  }
}

TEST(Synth, ForegroundFractionIsBounded) {
  for (auto style : {SynthStyle::bokeh, SynthStyle::salient}) {
    for (const auto& s : synth_bokeh(200, 3, 64, 64, style)) {
      int64_t fg = 0;
      for (uint8_t v : s.mask.pixels) {
        ASSERT_TRUE(v == 0 || v == 1);
        fg += v;
      }
      const double frac = static_cast<double>(fg) / static_cast<double>(s.mask.pixels.size());
      EXPECT_GE(frac, 0.05) << s.id;
      EXPECT_LE(frac, 0.7) << s.id;
    }
  }
}

TEST(Synth, ForegroundIsSharperThanBackground) {
  for (auto style : {SynthStyle::bokeh, SynthStyle::salient}) {
    int sharper = 0;
    const auto corpus = synth_bokeh(200, 4, 64, 64, style);
    for (const auto& s : corpus) {
      const auto [in, out] = laplacian_energy(s);
      sharper += in > out;
    }
    EXPECT_GE(sharper, 190) << to_string(style);
  }
}

TEST(Synth, RejectsEmptyRequests) {
  EXPECT_THROW(synth_bokeh(0, 0, 64, 64), std::invalid_argument);
  EXPECT_THROW(parse_synth_style("fog"), std::invalid_argument);
}
