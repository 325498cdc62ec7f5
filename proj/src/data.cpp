// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

#include "afiu/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "afiu/kernels.hpp"

namespace afiu::data {

namespace fs = std::filesystem;

namespace {

// Distribution helpers with a fixed bit recipe, so streams do not depend on
// the standard library's distribution implementations.
double uniform(std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {  // inclusive
  return lo + static_cast<int>(rng() % static_cast<uint64_t>(hi - lo + 1));
}

bool is_image_ext(const std::string& ext) { return ext == ".png" || ext == ".jpg" || ext == ".jpeg"; }

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::map<std::string, fs::path> index_dir(const fs::path& dir, bool masks) {
  if (!fs::is_directory(dir)) throw std::runtime_error("corpus: directory not found: " + dir.string());
  std::map<std::string, fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = lower(entry.path().extension().string());
    if (masks ? ext != ".png" : !is_image_ext(ext)) continue;
    const std::string stem = entry.path().stem().string();
    if (!out.emplace(stem, entry.path()).second) {
      throw std::runtime_error("corpus: stem '" + stem + "' appears twice in " + dir.string());
    }
  }
  return out;
}

Image8 from_mat(const cv::Mat& m) {
  Image8 img(m.rows, m.cols, m.channels());
  for (int y = 0; y < m.rows; ++y) {
    std::copy_n(m.ptr<uint8_t>(y), static_cast<size_t>(m.cols * m.channels()), &img.at(y, 0, 0));
  }
  return img;
}

cv::Mat to_mat(const Image8& img) {
  cv::Mat m(static_cast<int>(img.height), static_cast<int>(img.width), CV_8UC(static_cast<int>(img.channels)));
  for (int y = 0; y < m.rows; ++y) {
    std::copy_n(img.pixels.data() + y * img.width * img.channels, static_cast<size_t>(m.cols * m.channels()),
                m.ptr<uint8_t>(y));
  }
  return m;
}

Image8 read_rgb(const fs::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw std::runtime_error("corpus: cannot read image " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return from_mat(rgb);
}

Image8 read_gray(const fs::path& path) {
  cv::Mat g = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (g.empty()) throw std::runtime_error("corpus: cannot read mask " + path.string());
  return from_mat(g);
}

void write_png(const fs::path& path, const cv::Mat& m) {
  const std::vector<int> params = {cv::IMWRITE_PNG_COMPRESSION, 6};
  if (!cv::imwrite(path.string(), m, params)) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace

Image8 read_image(const fs::path& path) { return read_rgb(path); }

void write_png(const fs::path& path, const Image8& image) {
  if (image.channels == 3) {
    cv::Mat bgr;
    cv::cvtColor(to_mat(image), bgr, cv::COLOR_RGB2BGR);
    write_png(path, bgr);
  } else if (image.channels == 1) {
    write_png(path, to_mat(image));
  } else {
    throw std::invalid_argument("write_png: expected 1 or 3 channels");
  }
}

Image8 binarize(const Image8& labels) {
  Image8 out = labels;
  for (auto& v : out.pixels) v = v >= 128 ? 1 : 0;
  return out;
}

Image8 to_labels(const Image8& mask) {
  Image8 out = mask;
  for (auto& v : out.pixels) v = v ? 255 : 0;
  return out;
}

std::vector<Sample> load_corpus(const CorpusSpec& spec) {
  const auto images = index_dir(spec.root / spec.image_dir, false);
  const auto masks = index_dir(spec.root / spec.mask_dir, true);
  std::vector<std::string> unpaired;
  for (const auto& [stem, path] : images)
    if (!masks.count(stem)) unpaired.push_back(stem + " (no mask)");
  for (const auto& [stem, path] : masks)
    if (!images.count(stem)) unpaired.push_back(stem + " (no image)");
  if (!unpaired.empty()) {
    std::ostringstream os;
    os << "corpus " << spec.root.string() << ": " << unpaired.size() << " unpaired file(s):";
    for (const auto& u : unpaired) os << ' ' << u;
    throw std::runtime_error(os.str());
  }
  std::vector<Sample> out;
  out.reserve(images.size());
  for (const auto& [stem, path] : images) {
    Sample s;
    s.id = stem;
    s.image = read_rgb(path);
    s.mask = binarize(read_gray(masks.at(stem)));
    if (s.image.height != s.mask.height || s.image.width != s.mask.width) {
      throw std::runtime_error("corpus: image and mask sizes differ for '" + stem + "'");
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_corpus(const std::vector<Sample>& samples, const CorpusSpec& spec) {
  const fs::path img_dir = spec.root / spec.image_dir, mask_dir = spec.root / spec.mask_dir;
  std::error_code ec;
  fs::create_directories(img_dir, ec);
  fs::create_directories(mask_dir, ec);
  if (!fs::is_directory(img_dir) || !fs::is_directory(mask_dir)) {
    throw std::runtime_error("corpus: cannot create output directories under " + spec.root.string());
  }
  for (const auto& s : samples) {
    cv::Mat bgr;
    cv::cvtColor(to_mat(s.image), bgr, cv::COLOR_RGB2BGR);
    write_png(img_dir / (s.id + ".png"), bgr);
    write_png(mask_dir / (s.id + ".png"), to_mat(to_labels(s.mask)));
  }
}

// ---------------------------------------------------------------- augmentation

FlipAxis parse_flip_axis(const std::string& s) {
  if (s == "vertical") return FlipAxis::vertical;
  if (s == "horizontal") return FlipAxis::horizontal;
  if (s == "none") return FlipAxis::none;
  throw std::invalid_argument("unknown flip axis '" + s + "' (vertical|horizontal|none)");
}

std::string to_string(FlipAxis axis) {
  switch (axis) {
    case FlipAxis::vertical: return "vertical";
    case FlipAxis::horizontal: return "horizontal";
    case FlipAxis::none: return "none";
  }
  return "?";
}

AugmentConfig AugmentConfig::none(int64_t height, int64_t width) {
  AugmentConfig a;
  a.flip_axis = FlipAxis::none;
  a.flip_probability = 0;
  a.brightness = a.contrast = a.saturation = 0;
  a.target_height = height;
  a.target_width = width;
  return a;
}

void AugmentConfig::validate() const {
  if (!(flip_probability >= 0 && flip_probability <= 1)) {
    throw std::invalid_argument("augment: flip probability must be in [0,1]");
  }
  for (double r : {brightness, contrast, saturation}) {
    if (!(r >= 0 && r < 1)) throw std::invalid_argument("augment: jitter ranges must be in [0,1)");
  }
  if (target_height < 32 || target_width < 32 || target_height % 32 || target_width % 32) {
    throw std::invalid_argument("augment: target size must be a positive multiple of 32");
  }
}

uint64_t split_seed(uint64_t seed, uint64_t index) {
  // splitmix64 over a combination of both words.
  uint64_t z = seed * 0x9E3779B97F4A7C15ull + index + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

Tensor<float> image_to_tensor(const Image8& image) {
  if (image.channels != 3) throw std::invalid_argument("image_to_tensor: expected an RGB image");
  Tensor<float> t({1, 3, image.height, image.width});
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < image.height; ++y)
      for (int64_t x = 0; x < image.width; ++x) t.at(0, c, y, x) = image.at(y, x, c) / 255.0f;
  return t;
}

Image8 mask_from_tensor(const Tensor<float>& map) {
  const int64_t h = map.dim(map.rank() - 2), w = map.dim(map.rank() - 1);
  if (map.numel() != h * w) throw std::invalid_argument("mask_from_tensor: expected a single-channel map");
  Image8 out(h, w, 1);
  for (int64_t i = 0; i < h * w; ++i) {
    const float v = std::clamp(map[i], 0.0f, 1.0f);
    out.pixels[static_cast<size_t>(i)] = static_cast<uint8_t>(std::nearbyint(v * 255.0f));
  }
  return out;
}

namespace {

void flip(Tensor<float>& t, FlipAxis axis) {
  const int64_t planes = t.numel() / (t.h() * t.w()), h = t.h(), w = t.w();
  float* d = t.data();
  for (int64_t p = 0; p < planes; ++p) {
    float* plane = d + p * h * w;
    if (axis == FlipAxis::vertical) {
      for (int64_t y = 0; y < h / 2; ++y) std::swap_ranges(plane + y * w, plane + (y + 1) * w, plane + (h - 1 - y) * w);
    } else {
      for (int64_t y = 0; y < h; ++y) std::reverse(plane + y * w, plane + (y + 1) * w);
    }
  }
}

void jitter(Tensor<float>& img, float brightness, float contrast, float saturation) {
  const int64_t hw = img.h() * img.w();
  float* r = img.data();
  float* g = r + hw;
  float* b = g + hw;
  auto clamp01 = [](float v) { return std::clamp(v, 0.0f, 1.0f); };
  auto gray = [&](int64_t i) { return 0.299f * r[i] + 0.587f * g[i] + 0.114f * b[i]; };
  if (brightness != 1.0f) {
    for (float& v : img.values()) v = clamp01(v * brightness);
  }
  if (contrast != 1.0f) {
    double sum = 0;
    for (int64_t i = 0; i < hw; ++i) sum += gray(i);
    const float m = static_cast<float>(sum / static_cast<double>(hw));
    for (float& v : img.values()) v = clamp01((v - m) * contrast + m);
  }
  if (saturation != 1.0f) {
    for (int64_t i = 0; i < hw; ++i) {
      const float l = gray(i);
      r[i] = clamp01(l + saturation * (r[i] - l));
      g[i] = clamp01(l + saturation * (g[i] - l));
      b[i] = clamp01(l + saturation * (b[i] - l));
    }
  }
}

}  // namespace

Prepared preprocess(const Sample& sample, const AugmentConfig& aug, uint64_t rng_state) {
  const int64_t th = aug.target_height, tw = aug.target_width;
  Tensor<float> img = image_to_tensor(sample.image);
  if (img.h() != th || img.w() != tw) img = kernels::resize_forward(img, th, tw, kernels::Interp::bilinear);
  Tensor<float> mask({1, 1, sample.mask.height, sample.mask.width});
  for (int64_t i = 0; i < mask.numel(); ++i) mask[i] = sample.mask.pixels[static_cast<size_t>(i)] ? 1.0f : 0.0f;
  if (mask.h() != th || mask.w() != tw) mask = kernels::resize_forward(mask, th, tw, kernels::Interp::nearest);

  // Every draw is taken regardless of the configuration, so toggling one
  // augmentation never shifts the others' random values.
  std::mt19937_64 rng(rng_state);
  const double u_flip = uniform(rng);
  const auto factor = [&](double range) { return static_cast<float>(uniform(rng, 1.0 - range, 1.0 + range)); };
  const float fb = factor(aug.brightness), fc = factor(aug.contrast), fs = factor(aug.saturation);

  if (aug.flip_axis != FlipAxis::none && u_flip < aug.flip_probability) {
    flip(img, aug.flip_axis);
    flip(mask, aug.flip_axis);
  }
  jitter(img, fb, fc, fs);
  const int64_t hw = th * tw;
  for (int64_t c = 0; c < 3; ++c) {
    float* p = img.data() + c * hw;
    for (int64_t i = 0; i < hw; ++i) p[i] = (p[i] - kImageMean[c]) / kImageStd[c];
  }
  return {img.reshaped({3, th, tw}), mask.reshaped({1, th, tw})};
}

Batch make_batch(const std::vector<Sample>& corpus, const std::vector<size_t>& indices, const AugmentConfig& aug,
                 uint64_t stream) {
  const auto n = static_cast<int64_t>(indices.size());
  const int64_t h = aug.target_height, w = aug.target_width;
  Batch b{Tensor<float>({n, 3, h, w}), Tensor<float>({n, 1, h, w})};
  std::string error;
#pragma omp parallel for schedule(dynamic)
  for (int64_t i = 0; i < n; ++i) {
    try {
      const size_t idx = indices[static_cast<size_t>(i)];
      const Prepared p = preprocess(corpus.at(idx), aug, split_seed(stream, idx));
      std::copy(p.image.values().begin(), p.image.values().end(), b.images.data() + i * 3 * h * w);
      std::copy(p.mask.values().begin(), p.mask.values().end(), b.masks.data() + i * h * w);
    } catch (const std::exception& e) {
#pragma omp critical
      error = e.what();
    }
  }
  if (!error.empty()) throw std::runtime_error(error);
  return b;
}

// ---------------------------------------------------------------- synthesis

SynthStyle parse_synth_style(const std::string& s) {
  if (s == "bokeh") return SynthStyle::bokeh;
  if (s == "salient") return SynthStyle::salient;
  throw std::invalid_argument("unknown synth style '" + s + "' (bokeh|salient)");
}

std::string to_string(SynthStyle style) { return style == SynthStyle::bokeh ? "bokeh" : "salient"; }

namespace {

using Palette = std::vector<cv::Scalar>;

Palette random_palette(std::mt19937_64& rng, int count, bool vivid) {
  Palette p;
  for (int i = 0; i < count; ++i) {
    if (vivid) {
      // One dominant channel, the others low: strongly saturated colours.
      cv::Scalar c(uniform(rng, 0, 70), uniform(rng, 0, 70), uniform(rng, 0, 70));
      c[uniform_int(rng, 0, 2)] = uniform(rng, 180, 255);
      p.push_back(c);
    } else {
      const double base = uniform(rng, 50, 200);
      p.emplace_back(base + uniform(rng, -25, 25), base + uniform(rng, -25, 25), base + uniform(rng, -25, 25));
    }
  }
  return p;
}

// Dense high-frequency texture: a base colour, many small strokes and dots, and per-pixel noise.
cv::Mat texture(std::mt19937_64& rng, int h, int w, const Palette& palette) {
  auto pick = [&] { return palette[static_cast<size_t>(uniform_int(rng, 0, static_cast<int>(palette.size()) - 1))]; };
  cv::Mat m(h, w, CV_8UC3, pick());
  const int strokes = 12 + h * w / 48;
  for (int i = 0; i < strokes; ++i) {
    const cv::Point a(uniform_int(rng, 0, w - 1), uniform_int(rng, 0, h - 1));
    switch (uniform_int(rng, 0, 2)) {
      case 0: {
        const cv::Point b(a.x + uniform_int(rng, -8, 8), a.y + uniform_int(rng, -8, 8));
        cv::line(m, a, b, pick(), uniform_int(rng, 1, 2), cv::LINE_8);
        break;
      }
      case 1: cv::circle(m, a, uniform_int(rng, 1, 3), pick(), cv::FILLED, cv::LINE_8); break;
      default: {
        const cv::Point b(a.x + uniform_int(rng, 1, 4), a.y + uniform_int(rng, 1, 4));
        cv::rectangle(m, a, b, pick(), cv::FILLED, cv::LINE_8);
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) row[x][c] = cv::saturate_cast<uint8_t>(row[x][c] + uniform_int(rng, -24, 24));
  }
  return m;
}

cv::Mat shapes_mask(std::mt19937_64& rng, int h, int w) {
  cv::Mat mask(h, w, CV_8UC1, cv::Scalar(0));
  const int count = uniform_int(rng, 1, 3);
  const double side = std::min(h, w);
  for (int s = 0; s < count; ++s) {
    const cv::Point centre(uniform_int(rng, w / 8, w - 1 - w / 8), uniform_int(rng, h / 8, h - 1 - h / 8));
    if (uniform(rng) < 0.5) {
      const cv::Size axes(static_cast<int>(uniform(rng, 0.08, 0.35) * side), static_cast<int>(uniform(rng, 0.08, 0.35) * side));
      cv::ellipse(mask, centre, axes, uniform(rng, 0, 180), 0, 360, cv::Scalar(255), cv::FILLED, cv::LINE_8);
    } else {
      const int vertices = uniform_int(rng, 3, 7);
      const double radius = uniform(rng, 0.12, 0.4) * side;
      const double phase = uniform(rng, 0, 2 * M_PI);
      std::vector<cv::Point> poly;
      for (int v = 0; v < vertices; ++v) {
        const double a = phase + 2 * M_PI * v / vertices + uniform(rng, -0.3, 0.3);
        const double r = radius * uniform(rng, 0.6, 1.0);
        poly.emplace_back(centre.x + static_cast<int>(std::lround(r * std::cos(a))),
                          centre.y + static_cast<int>(std::lround(r * std::sin(a))));
      }
      cv::fillPoly(mask, std::vector<std::vector<cv::Point>>{poly}, cv::Scalar(255), cv::LINE_8);
    }
  }
  return mask;
}

Sample synth_one(uint64_t seed, int h, int w, SynthStyle style) {
  std::mt19937_64 rng(seed);
  const Palette background = random_palette(rng, uniform_int(rng, 3, 5), false);
  const Palette foreground = style == SynthStyle::salient ? random_palette(rng, uniform_int(rng, 2, 3), true)
                                                          : random_palette(rng, uniform_int(rng, 3, 5), false);
  cv::Mat bg = texture(rng, h, w, background);
  const double sigma = uniform(rng, 1.5, 3.5);
  cv::GaussianBlur(bg, bg, cv::Size(0, 0), sigma, sigma, cv::BORDER_REFLECT);
  const cv::Mat fg = texture(rng, h, w, foreground);

  cv::Mat mask;
  for (;;) {
    mask = shapes_mask(rng, h, w);
    const double frac = cv::countNonZero(mask) / static_cast<double>(h * w);
    if (frac >= 0.05 && frac <= 0.7) break;
  }
  cv::Mat img = bg.clone();
  fg.copyTo(img, mask);

  Sample s;
  s.image = from_mat(img);
  s.mask = binarize(from_mat(mask));
  return s;
}

}  // namespace

std::vector<Sample> synth_bokeh(int64_t n, uint64_t seed, int64_t height, int64_t width, SynthStyle style) {
  if (n < 1) throw std::invalid_argument("synth: count must be at least 1");
  if (height < 16 || width < 16) throw std::invalid_argument("synth: size must be at least 16x16");
  std::vector<Sample> out(static_cast<size_t>(n));
#pragma omp parallel for schedule(dynamic)
  for (int64_t i = 0; i < n; ++i) {
    Sample s = synth_one(split_seed(seed, static_cast<uint64_t>(i)), static_cast<int>(height), static_cast<int>(width),
                         style);
    char id[32];
    std::snprintf(id, sizeof id, "%s_%05lld", to_string(style).c_str(), static_cast<long long>(i));
    s.id = id;
    out[static_cast<size_t>(i)] = std::move(s);
  }
  return out;
}

}  // namespace afiu::data
