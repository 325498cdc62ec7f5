// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

#include "afiu/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace afiu::plot {

namespace {

constexpr double kWidth = 640, kHeight = 480;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 60;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v, double step) {
  char buf[32];
  const int decimals = step >= 1 ? 0 : std::min(6, static_cast<int>(std::ceil(-std::log10(step) - 1e-9)));
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::pair<double, double> extent(const Chart& chart, bool use_x) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : chart.series) {
    for (double v : use_x ? s.x : s.y) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) return {0.0, 1.0};
  if (lo == hi) return {lo - 0.5, hi + 0.5};
  return {lo, hi};
}

}  // namespace

std::vector<double> nice_ticks(double lo, double hi, int target_count) {
  if (!(hi > lo) || target_count < 2) return {lo};
  const double raw = (hi - lo) / (target_count - 1);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  // Multiples of a round step; divide by 1/mag when it is an integer so
  // 0.6 prints as 0.6 rather than 3 * 0.2.
  const double inv = mag < 1.0 ? std::round(1.0 / mag) : 0.0;
  auto value = [&](double k, double m) { return inv > 0.0 ? k * m / inv : k * m * mag; };
  std::vector<double> best;
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    const double step = value(1.0, m);
    std::vector<double> ticks;
    for (double k = std::ceil(lo / step - 1e-9); value(k, m) <= hi + step * 1e-9; k += 1.0) {
      ticks.push_back(value(k, m) == 0.0 ? 0.0 : value(k, m));
    }
    if (best.empty() || std::abs(static_cast<int>(ticks.size()) - target_count) <
                            std::abs(static_cast<int>(best.size()) - target_count)) {
      best = std::move(ticks);
    }
  }
  return best;
}

std::string render_svg(const Chart& chart) {
  for (const auto& s : chart.series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("series '" + s.label + "': x and y differ in length");
  }
  const auto [x0, x1] = chart.x_range.value_or(extent(chart, true));
  const auto [y0, y1] = chart.y_range.value_or(extent(chart, false));
  if (!(x1 > x0) || !(y1 > y0)) throw std::invalid_argument("empty plot range");

  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
         "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + num(kWidth / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" +
         escape(chart.title) + "</text>\n";

  const auto xt = nice_ticks(x0, x1), yt = nice_ticks(y0, y1);
  const double xstep = xt.size() > 1 ? xt[1] - xt[0] : 1.0, ystep = yt.size() > 1 ? yt[1] - yt[0] : 1.0;
  for (double t : xt) {
    svg += "<line x1=\"" + num(px(t)) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(px(t)) + "\" y2=\"" +
           num(kTop + ph) + "\" stroke=\"#e0e0e0\"/>\n";
    svg += "<text x=\"" + num(px(t)) + "\" y=\"" + num(kTop + ph + 18) + "\" text-anchor=\"middle\">" +
           tick_label(t, xstep) + "</text>\n";
  }
  for (double t : yt) {
    svg += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(py(t)) + "\" x2=\"" + num(kLeft + pw) + "\" y2=\"" +
           num(py(t)) + "\" stroke=\"#e0e0e0\"/>\n";
    svg += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(py(t) + 4) + "\" text-anchor=\"end\">" +
           tick_label(t, ystep) + "</text>\n";
  }
  svg += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
  svg += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kHeight - 15) + "\" text-anchor=\"middle\">" +
         escape(chart.x_label) + "</text>\n";
  svg += "<text transform=\"translate(18," + num(kTop + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
         escape(chart.y_label) + "</text>\n";

  svg += "<clipPath id=\"plot\"><rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(pw) +
         "\" height=\"" + num(ph) + "\"/></clipPath>\n";
  for (size_t i = 0; i < chart.series.size(); ++i) {
    const auto& s = chart.series[i];
    std::string points;
    for (size_t k = 0; k < s.x.size(); ++k) {
      if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
      points += (points.empty() ? "" : " ") + num(px(s.x[k])) + "," + num(py(s.y[k]));
    }
    svg += "<polyline clip-path=\"url(#plot)\" fill=\"none\" stroke-width=\"1.8\" stroke=\"" +
           std::string(kPalette[i % std::size(kPalette)]) + "\" points=\"" + points + "\"/>\n";
  }

  // Legend, top-right inside the plot area.
  const double lx = kLeft + pw - 170, ly0 = kTop + 12;
  for (size_t i = 0; i < chart.series.size(); ++i) {
    const double ly = ly0 + 18.0 * static_cast<double>(i);
    svg += "<line x1=\"" + num(lx) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(lx + 24) + "\" y2=\"" + num(ly) +
           "\" stroke-width=\"2.5\" stroke=\"" + kPalette[i % std::size(kPalette)] + "\"/>\n";
    svg += "<text x=\"" + num(lx + 30) + "\" y=\"" + num(ly + 4) + "\">" + escape(chart.series[i].label) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void write_svg(const std::filesystem::path& path, const Chart& chart) {
  const std::string svg = render_svg(chart);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << svg;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace afiu::plot
