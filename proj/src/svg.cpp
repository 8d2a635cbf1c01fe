#include "palsim/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace palsim {

namespace {

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
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

std::string text(double x, double y, const std::string& s, const char* anchor = "start", int size = 12) {
  return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"" + std::to_string(size) +
         "\" text-anchor=\"" + anchor + "\">" + escape(s) + "</text>\n";
}

std::string rect(double x, double y, double w, double h, const char* fill) {
  return "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) + "\" height=\"" + num(h) +
         "\" fill=\"" + fill + "\"/>\n";
}

std::string header(double w, double h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) +
         "\" font-family=\"sans-serif\">\n" + rect(0, 0, w, h, "white");
}

}  // namespace

std::string svg_histograms(const std::vector<std::pair<std::string, std::vector<double>>>& series, int bins,
                           const std::string& title, const std::string& x_label) {
  bins = std::max(bins, 1);
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& [name, v] : series)
    for (double x : v)
      if (std::isfinite(x)) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
  if (!(lo <= hi)) lo = 0.0, hi = 1.0;
  if (hi == lo) hi = lo + 1.0;

  const double width = 520, panel_h = 110, left = 120, plot_w = 360, top = 40;
  const double height = top + panel_h * static_cast<double>(series.size()) + 40;
  std::string out = header(width, height) + text(width / 2, 22, title, "middle", 15);
  for (std::size_t s = 0; s < series.size(); ++s) {
    std::vector<int> counts(static_cast<std::size_t>(bins), 0);
    for (double x : series[s].second) {
      if (!std::isfinite(x)) continue;
      const int b = std::min(bins - 1, static_cast<int>((x - lo) / (hi - lo) * bins));
      ++counts[static_cast<std::size_t>(b)];
    }
    const int peak = std::max(1, *std::max_element(counts.begin(), counts.end()));
    const double y0 = top + panel_h * static_cast<double>(s), base = y0 + panel_h - 20;
    out += text(left - 10, y0 + panel_h / 2, series[s].first, "end");
    out += "<line x1=\"" + num(left) + "\" y1=\"" + num(base) + "\" x2=\"" + num(left + plot_w) + "\" y2=\"" +
           num(base) + "\" stroke=\"black\"/>\n";
    const double bw = plot_w / bins;
    for (int b = 0; b < bins; ++b) {
      const double h = (panel_h - 30) * counts[static_cast<std::size_t>(b)] / peak;
      out += rect(left + b * bw + 1, base - h, bw - 2, h, "#4a7ab5");
    }
    out += text(left + plot_w + 6, base, "n=" + std::to_string(series[s].second.size()), "start", 10);
  }
  const double axis_y = top + panel_h * static_cast<double>(series.size()) - 4;
  out += text(left, axis_y, num(lo), "middle", 10) + text(left + plot_w, axis_y, num(hi), "middle", 10);
  out += text(left + plot_w / 2, axis_y + 24, x_label, "middle");
  return out + "</svg>\n";
}

std::string svg_bars(const std::vector<std::pair<std::string, double>>& bars, const std::string& title,
                     const std::string& x_label) {
  const double width = 560, row_h = 22, left = 220, plot_w = 280, top = 40;
  const double height = top + row_h * static_cast<double>(bars.size()) + 50;
  double peak = 0.0;
  for (const auto& b : bars) peak = std::max(peak, std::abs(b.second));
  if (peak == 0.0) peak = 1.0;
  std::string out = header(width, height) + text(width / 2, 22, title, "middle", 15);
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double y = top + row_h * static_cast<double>(i);
    const double w = plot_w * std::abs(bars[i].second) / peak;
    out += text(left - 8, y + row_h * 0.7, bars[i].first, "end", 11);
    out += rect(left, y + 3, w, row_h - 6, bars[i].second >= 0 ? "#4a7ab5" : "#c0504d");
    out += text(left + w + 4, y + row_h * 0.7, num(bars[i].second), "start", 10);
  }
  out += text(left + plot_w / 2, height - 16, x_label, "middle");
  return out + "</svg>\n";
}

}  // namespace palsim
