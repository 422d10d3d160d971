// SPDX-License-Identifier: Apache-2.0
//
// Minimal hand-written SVG charts: line plots, histograms and bar strips.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace wit::report {

struct Series {
  std::string name;
  std::vector<double> x, y;
};

namespace detail {

inline const char* color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  return palette[i % 6];
}

inline std::string esc(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}

inline std::string num(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

struct Frame {
  double W = 640, H = 360, L = 60, R = 20, T = 40, B = 45;
  double x0, x1, y0, y1;
  double px(double x) const { return L + (x1 > x0 ? (x - x0) / (x1 - x0) : 0.5) * (W - L - R); }
  double py(double y) const { return H - B - (y1 > y0 ? (y - y0) / (y1 - y0) : 0.5) * (H - T - B); }
};

inline void open_svg(std::ostringstream& os, const Frame& f, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.W << "\" height=\"" << f.H << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << f.W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << esc(title) << "</text>\n";
}

inline void axes(std::ostringstream& os, const Frame& f, const std::string& xlabel, const std::string& ylabel) {
  os << "<line x1=\"" << f.L << "\" y1=\"" << f.H - f.B << "\" x2=\"" << f.W - f.R << "\" y2=\"" << f.H - f.B << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << f.L << "\" y1=\"" << f.T << "\" x2=\"" << f.L << "\" y2=\"" << f.H - f.B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0, xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    os << "<text x=\"" << f.L - 5 << "\" y=\"" << f.py(yv) + 4 << "\" text-anchor=\"end\">" << num(yv) << "</text>\n"
       << "<text x=\"" << f.px(xv) << "\" y=\"" << f.H - f.B + 15 << "\" text-anchor=\"middle\">" << num(xv) << "</text>\n";
  }
  os << "<text x=\"" << (f.L + f.W - f.R) / 2 << "\" y=\"" << f.H - 8 << "\" text-anchor=\"middle\">" << esc(xlabel) << "</text>\n"
     << "<text x=\"14\" y=\"" << (f.T + f.H - f.B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
     << (f.T + f.H - f.B) / 2 << ")\">" << esc(ylabel) << "</text>\n";
}

}  // namespace detail

/// Line chart; NaN points break a series into separate segments.
inline std::string line_chart(const std::string& title, const std::vector<Series>& series, const std::string& xlabel,
                              const std::string& ylabel) {
  detail::Frame f;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo, xl = lo, xh = -lo;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      lo = std::min(lo, s.y[i]), hi = std::max(hi, s.y[i]);
      xl = std::min(xl, s.x[i]), xh = std::max(xh, s.x[i]);
    }
  if (!std::isfinite(lo)) lo = 0, hi = 1, xl = 0, xh = 1;
  if (hi == lo) hi = lo + 1;
  f.x0 = xl, f.x1 = xh, f.y0 = lo, f.y1 = hi;
  std::ostringstream os;
  detail::open_svg(os, f, title);
  detail::axes(os, f, xlabel, ylabel);
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    std::string pts;
    auto flush = [&] {
      if (!pts.empty())
        os << "<polyline fill=\"none\" stroke=\"" << detail::color(si) << "\" stroke-width=\"1.5\" points=\"" << pts << "\"/>\n";
      pts.clear();
    };
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i])) {
        flush();
        continue;
      }
      pts += detail::num(f.px(s.x[i])) + "," + detail::num(f.py(s.y[i])) + " ";
    }
    flush();
    os << "<text x=\"" << f.W - f.R - 5 << "\" y=\"" << f.T + 14 * si << "\" text-anchor=\"end\" fill=\"" << detail::color(si)
       << "\">" << detail::esc(s.name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

/// Histogram of values over [lo, hi] with `bins` equal-width bins.
inline std::string histogram(const std::string& title, const std::vector<double>& values, std::size_t bins, double lo,
                             double hi, const std::string& xlabel) {
  if (bins == 0 || !(hi > lo)) throw std::invalid_argument("histogram: need bins > 0 and hi > lo");
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    auto b = static_cast<std::ptrdiff_t>(std::floor((v - lo) / (hi - lo) * static_cast<double>(bins)));
    counts[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(bins) - 1))]++;
  }
  detail::Frame f;
  f.x0 = lo, f.x1 = hi, f.y0 = 0;
  f.y1 = std::max<double>(1.0, static_cast<double>(*std::max_element(counts.begin(), counts.end())));
  std::ostringstream os;
  detail::open_svg(os, f, title);
  detail::axes(os, f, xlabel, "count");
  const double w = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    const double xa = f.px(lo + w * b), xb = f.px(lo + w * (b + 1)), yt = f.py(static_cast<double>(counts[b]));
    os << "<rect x=\"" << detail::num(xa) << "\" y=\"" << detail::num(yt) << "\" width=\"" << detail::num(xb - xa - 1)
       << "\" height=\"" << detail::num(f.py(0) - yt) << "\" fill=\"#1f77b4\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

struct BarStrip {
  std::string label;
  std::vector<double> values;
  std::size_t highlight = std::numeric_limits<std::size_t>::max();  // drawn in red
  std::vector<bool> shaded;                                           // background band per bar
};

/// One row of bars per strip, values scaled to [0, 1] per chart.
inline std::string bar_strips(const std::string& title, const std::vector<BarStrip>& strips) {
  const double row = 60, left = 110, width = 480, top = 40;
  double vmax = 0;
  std::size_t n = 1;
  for (const auto& s : strips) {
    for (double v : s.values) vmax = std::max(vmax, v);
    n = std::max(n, s.values.size());
  }
  if (vmax <= 0) vmax = 1;
  std::ostringstream os;
  const double H = top + row * static_cast<double>(strips.size()) + 20;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + width + 20 << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << (left + width) / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << detail::esc(title) << "</text>\n";
  const double bw = width / static_cast<double>(n);
  for (std::size_t r = 0; r < strips.size(); ++r) {
    const auto& s = strips[r];
    const double base = top + row * static_cast<double>(r + 1) - 8;
    os << "<text x=\"" << left - 6 << "\" y=\"" << base - 15 << "\" text-anchor=\"end\">" << detail::esc(s.label) << "</text>\n";
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      const double x = left + bw * static_cast<double>(i);
      if (i < s.shaded.size() && s.shaded[i])
        os << "<rect x=\"" << detail::num(x) << "\" y=\"" << base - (row - 12) << "\" width=\"" << detail::num(bw)
           << "\" height=\"" << row - 12 << "\" fill=\"#eeeeaa\"/>\n";
      const double h = (row - 14) * s.values[i] / vmax;
      os << "<rect x=\"" << detail::num(x + 1) << "\" y=\"" << detail::num(base - h) << "\" width=\"" << detail::num(bw - 2)
         << "\" height=\"" << detail::num(h) << "\" fill=\"" << (i == s.highlight ? "#d62728" : "#1f77b4") << "\"/>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace wit::report
