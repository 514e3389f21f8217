#pragma once

#include <string>
#include <utility>
#include <vector>

namespace lg {

struct PlotSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  int width = 640;
  int height = 420;
};

// Self-contained SVG line chart (no external resources).
void write_line_chart(const std::string& path, const std::vector<PlotSeries>& series,
                      const PlotOptions& options);

}  // namespace lg
