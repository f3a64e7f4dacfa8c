/*
 * Copyright 2026 PISE Contributors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pise/common.hpp"

namespace pise {

/// One polyline of a plot.
struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

namespace detail {

inline std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string trim_number(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace detail

/// Minimal self-contained SVG line chart: axes, ticks, legend, caption.
/// Intended for gradient traces and robustness curves; no dependencies.
inline void save_line_plot_svg(const std::string& path,
                               const std::string& title,
                               const std::string& x_label,
                               const std::string& y_label,
                               const std::vector<PlotSeries>& series,
                               const std::string& caption = "") {
  check(!series.empty(), "plot needs at least one series");
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (const auto& s : series) {
    check(s.x.size() == s.y.size() && !s.x.empty(),
          "plot series must be non-empty with matched lengths");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      check(std::isfinite(s.x[i]) && std::isfinite(s.y[i]),
            "plot values must be finite");
      if (first) {
        xmin = xmax = s.x[i];
        ymin = ymax = s.y[i];
        first = false;
      } else {
        xmin = std::min(xmin, s.x[i]);
        xmax = std::max(xmax, s.x[i]);
        ymin = std::min(ymin, s.y[i]);
        ymax = std::max(ymax, s.y[i]);
      }
    }
  }
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) {
    ymax += 0.5;
    ymin -= 0.5;
  }
  const double W = 640, H = 420;
  const double L = 70, R = 20, T = 40, B = caption.empty() ? 50 : 74;
  const double pw = W - L - R, ph = H - T - B;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return T + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

  static const char* palette[] = {"#2563eb", "#dc2626", "#059669", "#d97706",
                                  "#7c3aed", "#0891b2"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
     << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  os << "<rect width=\"" << W << "\" height=\"" << H
     << "\" fill=\"#ffffff\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" "
     << "font-family=\"sans-serif\" font-size=\"15\" fill=\"#111\">"
     << detail::svg_escape(title) << "</text>\n";

  // Frame and ticks (5 per axis).
  os << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << pw
     << "\" height=\"" << ph << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double fx = xmin + (xmax - xmin) * t / 4.0;
    const double fy = ymin + (ymax - ymin) * t / 4.0;
    os << "<line x1=\"" << px(fx) << "\" y1=\"" << T + ph << "\" x2=\""
       << px(fx) << "\" y2=\"" << T + ph + 5 << "\" stroke=\"#333\"/>\n";
    os << "<text x=\"" << px(fx) << "\" y=\"" << T + ph + 18
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       << "font-size=\"11\" fill=\"#333\">" << detail::trim_number(fx)
       << "</text>\n";
    os << "<line x1=\"" << L - 5 << "\" y1=\"" << py(fy) << "\" x2=\"" << L
       << "\" y2=\"" << py(fy) << "\" stroke=\"#333\"/>\n";
    os << "<text x=\"" << L - 8 << "\" y=\"" << py(fy) + 4
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
       << "font-size=\"11\" fill=\"#333\">" << detail::trim_number(fy)
       << "</text>\n";
  }
  os << "<text x=\"" << L + pw / 2 << "\" y=\"" << T + ph + 34
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
     << "font-size=\"12\" fill=\"#111\">" << detail::svg_escape(x_label)
     << "</text>\n";
  os << "<text x=\"16\" y=\"" << T + ph / 2
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
     << "font-size=\"12\" fill=\"#111\" transform=\"rotate(-90 16 "
     << T + ph / 2 << ")\">" << detail::svg_escape(y_label) << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = palette[s % 6];
    os << "<polyline fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"1.8\" points=\"";
    for (std::size_t i = 0; i < series[s].x.size(); ++i)
      os << px(series[s].x[i]) << ',' << py(series[s].y[i]) << ' ';
    os << "\"/>\n";
    for (std::size_t i = 0; i < series[s].x.size(); ++i)
      os << "<circle cx=\"" << px(series[s].x[i]) << "\" cy=\""
         << py(series[s].y[i]) << "\" r=\"2.4\" fill=\"" << color << "\"/>\n";
    // Legend entry, top-right, stacked.
    const double ly = T + 14 + 16 * double(s);
    os << "<line x1=\"" << L + pw - 120 << "\" y1=\"" << ly << "\" x2=\""
       << L + pw - 100 << "\" y2=\"" << ly << "\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << L + pw - 94 << "\" y=\"" << ly + 4
       << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#111\">"
       << detail::svg_escape(series[s].name) << "</text>\n";
  }
  if (!caption.empty())
    os << "<text x=\"" << W / 2 << "\" y=\"" << H - 12
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       << "font-size=\"12\" fill=\"#444\">" << detail::svg_escape(caption)
       << "</text>\n";
  os << "</svg>\n";

  std::ofstream out(path, std::ios::trunc);
  if (!out.good()) throw IoError("cannot write " + path);
  out << os.str();
  if (!out.good()) throw IoError("failed writing " + path);
}

}  // namespace pise
