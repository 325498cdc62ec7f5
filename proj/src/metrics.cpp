// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

#include "afiu/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "afiu/kernels.hpp"

namespace afiu::metrics {

namespace fs = std::filesystem;

namespace {

void require_plane(const Plane& p, const char* what) {
  if (p.rank() != 2 || p.numel() == 0) {
    throw std::invalid_argument(std::string(what) + ": expected a non-empty (H,W) map, got " +
                                shape_to_string(p.shape()));
  }
}

void require_pair(const Plane& pred, const Plane& gt) {
  require_plane(pred, "prediction");
  require_plane(gt, "mask");
  if (pred.shape() != gt.shape()) {
    throw std::invalid_argument("prediction " + shape_to_string(pred.shape()) + " and mask " +
                                shape_to_string(gt.shape()) + " differ in size");
  }
  for (int64_t i = 0; i < pred.numel(); ++i) {
    if (!(pred[i] >= 0.0 && pred[i] <= 1.0)) {
      throw std::invalid_argument("prediction value " + std::to_string(pred[i]) + " at pixel " + std::to_string(i) +
                                  " is outside [0,1]");
    }
    if (gt[i] != 0.0 && gt[i] != 1.0) {
      throw std::invalid_argument("mask value " + std::to_string(gt[i]) + " at pixel " + std::to_string(i) +
                                  " is not 0 or 1");
    }
  }
}

// pred * 255 >= t  <=>  floor(pred * 255) >= t for integer t.
int level_of(double p) { return std::min(kThresholds - 1, static_cast<int>(std::floor(p * 255.0))); }

double sorted_sum(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, const fs::path& path, int64_t line) {
  size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": '" + s + "' is not a number");
  }
  return v;
}

std::ifstream open_with_header(const fs::path& path, const std::string& header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != header) {
    throw std::runtime_error(path.string() + ":1: expected header '" + header + "'");
  }
  return in;
}

void score_one(const Plane& prediction, const Plane& gt, double& mae_out, PrCurve& curve_out) {
  require_plane(gt, "mask");
  require_plane(prediction, "prediction");
  const Plane pred = resize_plane(prediction, gt.dim(0), gt.dim(1));
  mae_out = mae(pred, gt);
  curve_out = image_curve(pred, gt);
}

const char* kCurveHeader = "threshold,precision,recall,f_beta";
const char* kReportHeader = "dataset,count,mae,max_fbeta";

}  // namespace

Plane resize_plane(const Plane& plane, int64_t height, int64_t width) {
  require_plane(plane, "prediction");
  if (plane.dim(0) == height && plane.dim(1) == width) return plane;
  const Tensor<double> src({1, 1, plane.dim(0), plane.dim(1)},
                           std::vector<double>(plane.values().begin(), plane.values().end()));
  const Tensor<double> r = kernels::resize_forward(src, height, width, kernels::Interp::bilinear);
  Plane out({height, width}, std::vector<double>(r.values().begin(), r.values().end()));
  // Interpolation weights can round a 1.0 neighbourhood to 1 + ulp.
  for (double& v : out.values()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

data::Image8 quantize(const Plane& plane) {
  require_plane(plane, "prediction");
  data::Image8 out(plane.dim(0), plane.dim(1), 1);
  for (int64_t i = 0; i < plane.numel(); ++i) {
    out.pixels[static_cast<size_t>(i)] = static_cast<uint8_t>(std::nearbyint(plane[i] * 255.0));
  }
  return out;
}

Plane prediction_plane(const Tensor<float>& map) {
  if (map.rank() < 2) throw std::invalid_argument("prediction_plane: expected at least 2 dimensions");
  const int64_t h = map.dim(map.rank() - 2), w = map.dim(map.rank() - 1);
  if (h * w != map.numel()) throw std::invalid_argument("prediction_plane: expected a single plane");
  Plane p({h, w});
  for (int64_t i = 0; i < p.numel(); ++i) p[i] = static_cast<double>(map[i]);
  return p;
}

Plane prediction_plane(const data::Image8& gray) {
  if (gray.channels != 1) throw std::invalid_argument("prediction_plane: expected a single-channel image");
  Plane p({gray.height, gray.width});
  for (int64_t i = 0; i < p.numel(); ++i) p[i] = gray.pixels[static_cast<size_t>(i)] / 255.0;
  return p;
}

Plane mask_plane(const data::Image8& mask) {
  if (mask.channels != 1) throw std::invalid_argument("mask_plane: expected a single-channel mask");
  Plane p({mask.height, mask.width});
  for (int64_t i = 0; i < p.numel(); ++i) {
    const uint8_t v = mask.pixels[static_cast<size_t>(i)];
    if (v > 1) throw std::invalid_argument("mask_plane: value " + std::to_string(v) + " is not 0 or 1");
    p[i] = v;
  }
  return p;
}

double mae(const Plane& pred, const Plane& gt) {
  require_pair(pred, gt);
  double s = 0.0;
  for (int64_t i = 0; i < pred.numel(); ++i) s += std::abs(pred[i] - gt[i]);
  return s / static_cast<double>(pred.numel());
}

PrecisionRecall precision_recall(const Confusion& c) {
  PrecisionRecall pr;
  if (c.tp + c.fp > 0) pr.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) pr.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  return pr;
}

PrecisionRecall pr_at_threshold(const Plane& pred, const Plane& gt, int t) {
  if (t < 0 || t >= kThresholds) throw std::invalid_argument("threshold must be in [0,255], got " + std::to_string(t));
  return precision_recall(confusion_sweep(pred, gt)[static_cast<size_t>(t)]);
}

std::array<Confusion, kThresholds> confusion_sweep(const Plane& pred, const Plane& gt) {
  require_pair(pred, gt);
  std::array<int64_t, kThresholds> pos{}, neg{};
  for (int64_t i = 0; i < pred.numel(); ++i) ++(gt[i] == 1.0 ? pos : neg)[static_cast<size_t>(level_of(pred[i]))];
  int64_t total_pos = 0, total_neg = 0;
  for (int k = 0; k < kThresholds; ++k) {
    total_pos += pos[static_cast<size_t>(k)];
    total_neg += neg[static_cast<size_t>(k)];
  }
  std::array<Confusion, kThresholds> out;
  int64_t tp = 0, fp = 0;
  for (int t = kThresholds - 1; t >= 0; --t) {
    tp += pos[static_cast<size_t>(t)];
    fp += neg[static_cast<size_t>(t)];
    out[static_cast<size_t>(t)] = {tp, fp, total_pos - tp, total_neg - fp};
  }
  return out;
}

double f_beta(double precision, double recall, double beta_sq) {
  const double denom = beta_sq * precision + recall;
  if (denom == 0.0) return 0.0;
  return (1.0 + beta_sq) * precision * recall / denom;
}

double PrCurve::max_f_beta() const { return f_beta[static_cast<size_t>(best_threshold())]; }

int PrCurve::best_threshold() const {
  return static_cast<int>(std::max_element(f_beta.begin(), f_beta.end()) - f_beta.begin());
}

PrCurve image_curve(const Plane& pred, const Plane& gt) {
  const auto sweep = confusion_sweep(pred, gt);
  PrCurve c;
  for (size_t t = 0; t < sweep.size(); ++t) {
    const PrecisionRecall pr = precision_recall(sweep[t]);
    c.precision[t] = pr.precision;
    c.recall[t] = pr.recall;
    c.f_beta[t] = f_beta(pr.precision, pr.recall);
  }
  return c;
}

MetricReport evaluate_corpus(const std::vector<Plane>& predictions, const std::vector<Plane>& masks,
                             std::string dataset) {
  if (predictions.size() != masks.size()) {
    throw std::invalid_argument("evaluate_corpus: " + std::to_string(predictions.size()) + " predictions for " +
                                std::to_string(masks.size()) + " masks");
  }
  if (masks.empty()) throw std::invalid_argument("evaluate_corpus: nothing to evaluate");
  const size_t n = masks.size();
  MetricReport report;
  report.dataset = std::move(dataset);
  report.count = static_cast<int64_t>(n);
  report.mae_per_image.resize(n);
  std::vector<PrCurve> curves(n);
  std::vector<std::exception_ptr> errors(n);

#pragma omp parallel for schedule(dynamic)
  for (size_t i = 0; i < n; ++i) {
    try {
      score_one(predictions[i], masks[i], report.mae_per_image[i], curves[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (size_t i = 0; i < n; ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      throw std::invalid_argument("image " + std::to_string(i) + ": " + e.what());
    }
  }

  const double inv = 1.0 / static_cast<double>(n);
  report.mae = sorted_sum(report.mae_per_image) * inv;
  std::vector<double> column(n);
  for (size_t t = 0; t < static_cast<size_t>(kThresholds); ++t) {
    for (size_t i = 0; i < n; ++i) column[i] = curves[i].precision[t];
    report.curve.precision[t] = sorted_sum(column) * inv;
    for (size_t i = 0; i < n; ++i) column[i] = curves[i].recall[t];
    report.curve.recall[t] = sorted_sum(column) * inv;
    report.curve.f_beta[t] = f_beta(report.curve.precision[t], report.curve.recall[t]);
  }
  report.max_f_beta = report.curve.max_f_beta();
  return report;
}

void write_curve_csv(const fs::path& path, const PrCurve& curve) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kCurveHeader << '\n';
  for (size_t t = 0; t < static_cast<size_t>(kThresholds); ++t) {
    out << t << ',' << fixed6(curve.precision[t]) << ',' << fixed6(curve.recall[t]) << ',' << fixed6(curve.f_beta[t])
        << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

PrCurve read_curve_csv(const fs::path& path) {
  std::ifstream in = open_with_header(path, kCurveHeader);
  PrCurve c;
  std::string line;
  int64_t lineno = 1;
  int rows = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    if (f.size() != 4) throw std::runtime_error(where + "expected 4 fields, got " + std::to_string(f.size()));
    const double t = parse_number(f[0], path, lineno);
    if (t != rows) throw std::runtime_error(where + "expected threshold " + std::to_string(rows));
    if (rows >= kThresholds) throw std::runtime_error(where + "more than 256 rows");
    c.precision[static_cast<size_t>(rows)] = parse_number(f[1], path, lineno);
    c.recall[static_cast<size_t>(rows)] = parse_number(f[2], path, lineno);
    c.f_beta[static_cast<size_t>(rows)] = parse_number(f[3], path, lineno);
    ++rows;
  }
  if (rows != kThresholds) {
    throw std::runtime_error(path.string() + ": expected 256 rows, found " + std::to_string(rows));
  }
  return c;
}

void write_report_csv(const fs::path& path, const std::vector<ReportRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kReportHeader << '\n';
  for (const auto& r : rows) {
    if (r.dataset.find_first_of(",\n\r") != std::string::npos) {
      throw std::invalid_argument("dataset name '" + r.dataset + "' contains a comma or line break");
    }
    out << r.dataset << ',' << r.count << ',' << fixed6(r.mae) << ',' << fixed6(r.max_f_beta) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<ReportRow> read_report_csv(const fs::path& path) {
  std::ifstream in = open_with_header(path, kReportHeader);
  std::vector<ReportRow> rows;
  std::string line;
  for (int64_t lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 4) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 4 fields, got " +
                               std::to_string(f.size()));
    }
    ReportRow r;
    r.dataset = f[0];
    r.count = static_cast<int64_t>(parse_number(f[1], path, lineno));
    r.mae = parse_number(f[2], path, lineno);
    r.max_f_beta = parse_number(f[3], path, lineno);
    rows.push_back(r);
  }
  return rows;
}

ReportRow summary(const MetricReport& report) { return {report.dataset, report.count, report.mae, report.max_f_beta}; }

}  // namespace afiu::metrics
