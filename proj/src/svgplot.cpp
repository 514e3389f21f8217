#include "loopgraph/svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "loopgraph/errors.hpp"

namespace lg {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

}  // namespace

void write_line_chart(const std::string& path, const std::vector<PlotSeries>& series,
                      const PlotOptions& options) {
  if (series.empty()) throw EmptyInputError("write_line_chart: no series");
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  size_t total = 0;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      const double xv = options.log_x ? std::log10(std::max(x, 1e-12)) : x;
      xmin = std::min(xmin, xv);
      xmax = std::max(xmax, xv);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
      ++total;
    }
  }
  if (total == 0) throw EmptyInputError("write_line_chart: series have no points");
  if (xmax - xmin < 1e-12) xmax = xmin + 1;
  if (ymax - ymin < 1e-12) ymax = ymin + 1;

  const double ml = 62, mr = 18, mt = 34, mb = 48;
  const double pw = options.width - ml - mr;
  const double ph = options.height - mt - mb;
  auto sx = [&](double x) {
    const double xv = options.log_x ? std::log10(std::max(x, 1e-12)) : x;
    return ml + (xv - xmin) / (xmax - xmin) * pw;
  };
  auto sy = [&](double y) { return mt + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << options.width
      << "\" height=\"" << options.height << "\" font-family=\"sans-serif\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << options.width / 2 << "\" y=\"20\" text-anchor=\"middle\" "
      << "font-size=\"14\">" << options.title << "</text>\n";

  // Axes and ticks.
  out << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw
      << "\" y2=\"" << mt + ph << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
      << mt + ph << "\" stroke=\"black\"/>\n";
  const int ticks = 5;
  for (int i = 0; i <= ticks; ++i) {
    const double fx = xmin + (xmax - xmin) * i / ticks;
    const double px = ml + pw * i / ticks;
    const double label = options.log_x ? std::pow(10.0, fx) : fx;
    out << "<line x1=\"" << px << "\" y1=\"" << mt + ph << "\" x2=\"" << px
        << "\" y2=\"" << mt + ph + 4 << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << px << "\" y=\"" << mt + ph + 18
        << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt(label) << "</text>\n";
    const double fy = ymin + (ymax - ymin) * i / ticks;
    const double py = mt + ph * (1.0 - static_cast<double>(i) / ticks);
    out << "<line x1=\"" << ml - 4 << "\" y1=\"" << py << "\" x2=\"" << ml
        << "\" y2=\"" << py << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << ml - 8 << "\" y=\"" << py + 4
        << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(fy) << "</text>\n";
  }
  out << "<text x=\"" << ml + pw / 2 << "\" y=\"" << options.height - 8
      << "\" text-anchor=\"middle\" font-size=\"12\">" << options.x_label
      << "</text>\n";
  out << "<text x=\"16\" y=\"" << mt + ph / 2
      << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
      << mt + ph / 2 << ")\">" << options.y_label << "</text>\n";

  for (size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % 5];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : series[s].points) out << sx(x) << ',' << sy(y) << ' ';
    out << "\"/>\n";
    for (const auto& [x, y] : series[s].points) {
      out << "<circle cx=\"" << sx(x) << "\" cy=\"" << sy(y) << "\" r=\"2.5\" fill=\""
          << color << "\"/>\n";
    }
    out << "<text x=\"" << ml + pw - 6 << "\" y=\"" << mt + 14 + 16 * s
        << "\" text-anchor=\"end\" font-size=\"11\" fill=\"" << color << "\">"
        << series[s].label << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace lg
