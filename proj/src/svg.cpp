#include "scope3/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "scope3/text.hpp"

namespace scope3::svg {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string color(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

}  // namespace

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
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

std::string line_chart(const std::string& title, const std::string& x_label, const std::vector<Series>& series,
                       const std::vector<double>& markers) {
  const double width = 640, height = 400, left = 60, right = 20, top = 40, bottom = 50;
  const double pw = width - left - right, ph = height - top - bottom;

  std::size_t n = 0;
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& s : series) {
    n = std::max(n, s.values.size());
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-12) hi = lo + 1.0;
  double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  auto px = [&](double i) { return left + (n <= 1 ? pw / 2 : pw * (i - 1) / static_cast<double>(n - 1)); };
  auto py = [&](double v) { return top + ph * (hi - v) / (hi - lo); };

  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" +
                    num(height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + num(width / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" + escape(title) +
         "</text>\n";
  out += "<line x1=\"" + num(left) + "\" y1=\"" + num(top + ph) + "\" x2=\"" + num(left + pw) + "\" y2=\"" +
         num(top + ph) + "\" stroke=\"black\"/>\n";
  out += "<line x1=\"" + num(left) + "\" y1=\"" + num(top) + "\" x2=\"" + num(left) + "\" y2=\"" + num(top + ph) +
         "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    double v = lo + (hi - lo) * t / 4.0;
    out += "<text x=\"" + num(left - 6) + "\" y=\"" + num(py(v) + 4) + "\" text-anchor=\"end\">" + num(v) +
           "</text>\n";
  }
  for (std::size_t i = 1; i <= n; ++i) {
    if (n > 20 && i % ((n + 9) / 10) != 0 && i != 1) continue;
    out += "<text x=\"" + num(px(static_cast<double>(i))) + "\" y=\"" + num(top + ph + 16) +
           "\" text-anchor=\"middle\">" + std::to_string(i) + "</text>\n";
  }
  out += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(height - 12) + "\" text-anchor=\"middle\">" +
         escape(x_label) + "</text>\n";

  for (double m : markers) {
    out += "<line x1=\"" + num(px(m)) + "\" y1=\"" + num(top) + "\" x2=\"" + num(px(m)) + "\" y2=\"" +
           num(top + ph) + "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    std::string points;
    for (std::size_t i = 0; i < series[s].values.size(); ++i) {
      double v = series[s].values[i];
      if (!std::isfinite(v)) continue;
      points += num(px(static_cast<double>(i + 1))) + "," + num(py(v)) + " ";
    }
    out += "<polyline fill=\"none\" stroke=\"" + color(s) + "\" stroke-width=\"2\" points=\"" + points + "\"/>\n";
    double ly = top + 14 + 16 * static_cast<double>(s);
    out += "<line x1=\"" + num(left + pw - 140) + "\" y1=\"" + num(ly - 4) + "\" x2=\"" + num(left + pw - 120) +
           "\" y2=\"" + num(ly - 4) + "\" stroke=\"" + color(s) + "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + num(left + pw - 114) + "\" y=\"" + num(ly) + "\">" + escape(series[s].name) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

std::string grouped_bars(const std::string& title, const std::vector<std::string>& categories,
                         const std::vector<Series>& series) {
  const double label_w = 300, bar_w = 360, row_h = 8.0 * static_cast<double>(std::max<std::size_t>(series.size(), 1)) + 10;
  const double top = 60, width = label_w + bar_w + 140;
  const double height = top + row_h * static_cast<double>(categories.size()) + 20;
  const double axis = label_w + bar_w / 2;

  std::vector<double> scale(series.size(), 1.0);
  for (std::size_t s = 0; s < series.size(); ++s) {
    double m = 0.0;
    for (double v : series[s].values) m = std::max(m, std::fabs(v));
    scale[s] = m > 0.0 ? m : 1.0;
  }

  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" +
                    num(height) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + num(width / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" + escape(title) +
         "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    double lx = label_w + 150.0 * static_cast<double>(s);
    out += "<rect x=\"" + num(lx) + "\" y=\"34\" width=\"12\" height=\"10\" fill=\"" + color(s) + "\"/>\n";
    out += "<text x=\"" + num(lx + 16) + "\" y=\"43\">" + escape(series[s].name) + " (max " +
           format_double(scale[s]) + ")</text>\n";
  }
  out += "<line x1=\"" + num(axis) + "\" y1=\"" + num(top - 4) + "\" x2=\"" + num(axis) + "\" y2=\"" +
         num(height - 16) + "\" stroke=\"black\"/>\n";
  for (std::size_t c = 0; c < categories.size(); ++c) {
    double y = top + row_h * static_cast<double>(c);
    out += "<text x=\"" + num(label_w - 6) + "\" y=\"" + num(y + row_h / 2) + "\" text-anchor=\"end\">" +
           escape(categories[c]) + "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
      double v = c < series[s].values.size() ? series[s].values[c] : 0.0;
      double len = (bar_w / 2) * std::fabs(v) / scale[s];
      double x = v >= 0 ? axis : axis - len;
      out += "<rect x=\"" + num(x) + "\" y=\"" + num(y + 2 + 8.0 * static_cast<double>(s)) + "\" width=\"" +
             num(len) + "\" height=\"7\" fill=\"" + color(s) + "\"/>\n";
    }
  }
  out += "</svg>\n";
  return out;
}

}  // namespace scope3::svg
