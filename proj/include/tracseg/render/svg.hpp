#pragma once

#include <span>
#include <string>
#include <vector>

namespace tracseg::render {

struct Series {
  std::string label;
  std::vector<double> x, y;
  std::string color = "#1d3557";
};

struct Bar {
  std::string label;
  double value = 0;
  std::string color = "#457b9d";
};

/// Line/scatter chart with axes and a legend.
std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series, bool markers_only = false);

/// Grouped bar chart: one group per entry of `groups`, bars within a group side by side.
std::string svg_bar_chart(const std::string& title, const std::string& y_label,
                          const std::vector<std::pair<std::string, std::vector<Bar>>>& groups);

}  // namespace tracseg::render
