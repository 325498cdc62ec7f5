// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

// Minimal SVG line charts for PR, F-measure and loss curves.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace afiu::plot {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::optional<std::pair<double, double>> x_range;  // default: data extent
  std::optional<std::pair<double, double>> y_range;
  std::vector<Series> series;
};

/// Evenly spaced round tick values covering [lo, hi].
std::vector<double> nice_ticks(double lo, double hi, int target_count = 6);

std::string render_svg(const Chart& chart);
void write_svg(const std::filesystem::path& path, const Chart& chart);

}  // namespace afiu::plot
