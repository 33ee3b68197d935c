#pragma once

// Minimal SVG 1.1 line charts: one polyline per series, linear axes, legend.

#include <string>
#include <utility>
#include <vector>

namespace basis {

struct PlotSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

struct PlotOptions {
  std::string title;
  std::string x_label = "step";
  std::string y_label = "loss";
  int width = 720;
  int height = 440;
};

std::string render_line_chart(const std::vector<PlotSeries>& series, const PlotOptions& options);

}  // namespace basis
