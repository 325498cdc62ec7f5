// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

// Binary-segmentation scores: MAE, thresholded precision/recall, F-beta and
// the 256-threshold PR curve, per image and per corpus.
//
// Conventions for empty denominators: precision is 1 when nothing is
// predicted positive, recall is 1 when the mask has no positive pixel, and
// F-beta is 0 when beta^2 * p + r is 0.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "afiu/data.hpp"
#include "afiu/tensor.hpp"

namespace afiu::metrics {

inline constexpr int kThresholds = 256;
inline constexpr double kBetaSquared = 0.3;

/// (H,W) map. Predictions lie in [0,1]; masks hold exactly 0 or 1.
using Plane = Tensor<double>;

Plane prediction_plane(const Tensor<float>& map);  // any shape ending in (H,W) with a single plane
Plane prediction_plane(const data::Image8& gray);  // 8-bit, scaled by 1/255
Plane mask_plane(const data::Image8& mask);        // 0/1 mask

/// Bilinear resize, clamped back into [0,1].
Plane resize_plane(const Plane& plane, int64_t height, int64_t width);
/// 8-bit image of round(p * 255), ties to even.
data::Image8 quantize(const Plane& plane);

double mae(const Plane& pred, const Plane& gt);

struct Confusion {
  int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct PrecisionRecall {
  double precision = 1.0;
  double recall = 1.0;
};

PrecisionRecall precision_recall(const Confusion& c);

/// Pixels with pred * 255 >= t count as positive; t = 0 marks everything positive.
PrecisionRecall pr_at_threshold(const Plane& pred, const Plane& gt, int t);

/// Counts at every threshold from one pass over the pixels.
std::array<Confusion, kThresholds> confusion_sweep(const Plane& pred, const Plane& gt);

double f_beta(double precision, double recall, double beta_sq = kBetaSquared);

struct PrCurve {
  std::array<double, kThresholds> precision{};
  std::array<double, kThresholds> recall{};
  std::array<double, kThresholds> f_beta{};

  double max_f_beta() const;
  int best_threshold() const;  // lowest threshold attaining the maximum
};

PrCurve image_curve(const Plane& pred, const Plane& gt);

struct MetricReport {
  std::string dataset;
  int64_t count = 0;
  std::vector<double> mae_per_image;
  double mae = 0.0;
  PrCurve curve;
  double max_f_beta = 0.0;
};

/// Resizes each prediction (bilinear) to its mask's resolution, averages
/// precision and recall per threshold over images, then derives F-beta.
/// Means are summed in sorted order, so the result does not depend on the
/// order of the images.
MetricReport evaluate_corpus(const std::vector<Plane>& predictions, const std::vector<Plane>& masks,
                             std::string dataset = "");

void write_curve_csv(const std::filesystem::path& path, const PrCurve& curve);
PrCurve read_curve_csv(const std::filesystem::path& path);

struct ReportRow {
  std::string dataset;
  int64_t count = 0;
  double mae = 0.0;
  double max_f_beta = 0.0;
};

void write_report_csv(const std::filesystem::path& path, const std::vector<ReportRow>& rows);
std::vector<ReportRow> read_report_csv(const std::filesystem::path& path);
ReportRow summary(const MetricReport& report);

}  // namespace afiu::metrics
