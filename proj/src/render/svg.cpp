#include "tracseg/render/svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace tracseg::render {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 160, kTop = 40, kBottom = 50;

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

struct Frame {
  double x0, x1, y0, y1;

  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

std::string header(const std::string& title) {
  return fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"22\" font-size=\"15\" text-anchor=\"middle\">{3}</text>\n",
      kWidth, kHeight, kWidth / 2, escape(title));
}

std::string axes(const Frame& f, const std::string& x_label, const std::string& y_label, bool x_ticks) {
  std::string s;
  const double bx = kLeft, by = kHeight - kBottom, tx = kWidth - kRight;
  s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", bx, by, tx);
  s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", bx, by, kTop);
  for (int i = 0; i <= 4; ++i) {
    const double y = f.y0 + (f.y1 - f.y0) * i / 4.0;
    s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.3g}</text>\n", bx - 6, f.py(y) + 4, y);
    if (x_ticks) {
      const double x = f.x0 + (f.x1 - f.x0) * i / 4.0;
      s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{:.3g}</text>\n", f.px(x), by + 16, x);
    }
  }
  s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", (bx + tx) / 2, kHeight - 12,
                   escape(x_label));
  s += fmt::format("<text x=\"16\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0})\">{1}</text>\n",
                   (by + kTop) / 2, escape(y_label));
  return s;
}

std::pair<double, double> padded(double lo, double hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) return {0, 1};
  if (hi - lo < 1e-12) return {lo - 0.5, hi + 0.5};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

}  // namespace

std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series, bool markers_only) {
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
  for (const auto& s : series) {
    for (double x : s.x) xlo = std::min(xlo, x), xhi = std::max(xhi, x);
    for (double y : s.y) ylo = std::min(ylo, y), yhi = std::max(yhi, y);
  }
  const auto [x0, x1] = padded(xlo, xhi);
  const auto [y0, y1] = padded(ylo, yhi);
  const Frame f{x0, x1, y0, y1};
  std::string svg = header(title) + axes(f, x_label, y_label, true);
  double legend_y = kTop + 10;
  for (const auto& s : series) {
    const std::size_t n = std::min(s.x.size(), s.y.size());
    if (markers_only) {
      for (std::size_t i = 0; i < n; ++i)
        svg += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"2.5\" fill=\"{}\"/>\n", f.px(s.x[i]), f.py(s.y[i]),
                           s.color);
    } else {
      std::string pts;
      for (std::size_t i = 0; i < n; ++i) pts += fmt::format("{:.2f},{:.2f} ", f.px(s.x[i]), f.py(s.y[i]));
      svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n", s.color, pts);
    }
    svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/>\n", kWidth - kRight + 12,
                       legend_y - 9, s.color);
    svg += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", kWidth - kRight + 28, legend_y, escape(s.label));
    legend_y += 16;
  }
  return svg + "</svg>\n";
}

std::string svg_bar_chart(const std::string& title, const std::string& y_label,
                          const std::vector<std::pair<std::string, std::vector<Bar>>>& groups) {
  double yhi = 0;
  std::size_t per_group = 1;
  for (const auto& [name, bars] : groups) {
    per_group = std::max(per_group, bars.size());
    for (const auto& b : bars) yhi = std::max(yhi, b.value);
  }
  const Frame f{0, static_cast<double>(std::max<std::size_t>(groups.size(), 1)), 0, yhi > 0 ? yhi * 1.05 : 1};
  std::string svg = header(title) + axes(f, "", y_label, false);
  const double group_w = (kWidth - kLeft - kRight) / std::max<std::size_t>(groups.size(), 1);
  const double bar_w = group_w * 0.8 / static_cast<double>(per_group);
  std::vector<std::pair<std::string, std::string>> legend;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& [name, bars] = groups[g];
    const double gx = kLeft + g * group_w + group_w * 0.1;
    for (std::size_t b = 0; b < bars.size(); ++b) {
      const double top = f.py(bars[b].value), base = f.py(0);
      svg += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\"/>\n",
                         gx + b * bar_w, top, bar_w * 0.95, base - top, bars[b].color);
      if (std::none_of(legend.begin(), legend.end(), [&](const auto& l) { return l.first == bars[b].label; }))
        legend.emplace_back(bars[b].label, bars[b].color);
    }
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", gx + group_w * 0.4,
                       kHeight - kBottom + 16, escape(name));
  }
  double legend_y = kTop + 10;
  for (const auto& [label, color] : legend) {
    svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/>\n", kWidth - kRight + 12,
                       legend_y - 9, color);
    svg += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", kWidth - kRight + 28, legend_y, escape(label));
    legend_y += 16;
  }
  return svg + "</svg>\n";
}

}  // namespace tracseg::render
