#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mlmpc/csv.hpp"

namespace mlmpc {

// Static SVG line charts for session plots: x is the step index, one polyline
// per series, NaN samples split a series into segments.

struct SvgSeries {
  std::string label;
  std::vector<double> values;
  std::string color = "#000000";
  bool dashed = false;
};

namespace detail {
inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}
}  // namespace detail

inline void write_line_chart(const std::string& path, const std::string& title,
                             const std::string& x_label, const std::string& y_label,
                             std::span<const SvgSeries> series) {
  const double width = 900, height = 420;
  const double left = 70, right = 880, top = 50, bottom = 370;

  std::size_t n = 0;
  double y_min = std::numeric_limits<double>::infinity();
  double y_max = -std::numeric_limits<double>::infinity();
  for (const auto& s : series) {
    n = std::max(n, s.values.size());
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      y_min = std::min(y_min, v);
      y_max = std::max(y_max, v);
    }
  }
  if (!(y_min < y_max)) {
    y_min = std::isfinite(y_min) ? y_min - 1.0 : -1.0;
    y_max = y_min + 2.0;
  }
  const double pad = 0.05 * (y_max - y_min);
  y_min -= pad;
  y_max += pad;
  const double x_max = n > 1 ? static_cast<double>(n - 1) : 1.0;

  auto to_x = [&](double step) { return left + (right - left) * step / x_max; };
  auto to_y = [&](double v) { return bottom - (bottom - top) * (v - y_min) / (y_max - y_min); };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::svg_num(width) +
         "\" height=\"" + detail::svg_num(height) + "\" viewBox=\"0 0 " + detail::svg_num(width) +
         " " + detail::svg_num(height) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + detail::svg_num(width / 2) +
         "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" +
         title + "</text>\n";

  // Axes and ticks.
  out += "<line x1=\"" + detail::svg_num(left) + "\" y1=\"" + detail::svg_num(bottom) +
         "\" x2=\"" + detail::svg_num(right) + "\" y2=\"" + detail::svg_num(bottom) +
         "\" stroke=\"black\"/>\n";
  out += "<line x1=\"" + detail::svg_num(left) + "\" y1=\"" + detail::svg_num(top) + "\" x2=\"" +
         detail::svg_num(left) + "\" y2=\"" + detail::svg_num(bottom) + "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fx = x_max * k / 4.0;
    const double px = to_x(fx);
    out += "<line x1=\"" + detail::svg_num(px) + "\" y1=\"" + detail::svg_num(bottom) +
           "\" x2=\"" + detail::svg_num(px) + "\" y2=\"" + detail::svg_num(bottom + 5) +
           "\" stroke=\"black\"/>\n";
    out += "<text x=\"" + detail::svg_num(px) + "\" y=\"" + detail::svg_num(bottom + 20) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
           detail::svg_num(fx) + "</text>\n";
    const double fy = y_min + (y_max - y_min) * k / 4.0;
    const double py = to_y(fy);
    out += "<line x1=\"" + detail::svg_num(left - 5) + "\" y1=\"" + detail::svg_num(py) +
           "\" x2=\"" + detail::svg_num(left) + "\" y2=\"" + detail::svg_num(py) +
           "\" stroke=\"black\"/>\n";
    out += "<text x=\"" + detail::svg_num(left - 9) + "\" y=\"" + detail::svg_num(py + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
           detail::svg_num(fy) + "</text>\n";
  }
  out += "<text x=\"" + detail::svg_num((left + right) / 2) + "\" y=\"" +
         detail::svg_num(height - 8) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + x_label +
         "</text>\n";
  out += "<text x=\"16\" y=\"" + detail::svg_num((top + bottom) / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 " +
         detail::svg_num((top + bottom) / 2) + ")\">" + y_label + "</text>\n";

  // Series, splitting at NaN gaps.
  for (const auto& s : series) {
    std::string points;
    auto flush = [&]() {
      if (points.empty()) return;
      out += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"1.5\"" +
             (s.dashed ? " stroke-dasharray=\"6 4\"" : "") + " points=\"" + points + "\"/>\n";
      points.clear();
    };
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      if (!std::isfinite(s.values[i])) {
        flush();
        continue;
      }
      if (!points.empty()) points += ' ';
      points += detail::svg_num(to_x(static_cast<double>(i))) + ',' +
                detail::svg_num(to_y(s.values[i]));
    }
    flush();
  }

  // Legend.
  double ly = top + 4;
  for (const auto& s : series) {
    out += "<line x1=\"" + detail::svg_num(right - 150) + "\" y1=\"" + detail::svg_num(ly) +
           "\" x2=\"" + detail::svg_num(right - 120) + "\" y2=\"" + detail::svg_num(ly) +
           "\" stroke=\"" + s.color + "\" stroke-width=\"1.5\"" +
           (s.dashed ? " stroke-dasharray=\"6 4\"" : "") + "/>\n";
    out += "<text x=\"" + detail::svg_num(right - 114) + "\" y=\"" + detail::svg_num(ly + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + s.label + "</text>\n";
    ly += 16;
  }
  out += "</svg>\n";
  write_file(path, out);
}

}  // namespace mlmpc
