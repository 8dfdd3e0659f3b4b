#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace sdoh {

struct SvgSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
  // a triangle marker, e.g. the test score at the selected epoch
  std::optional<std::pair<double, double>> marker;
};

// Small static line chart; deterministic output.
std::string render_line_chart_svg(const std::string& title, const std::string& x_label,
                                  const std::string& y_label,
                                  const std::vector<SvgSeries>& series);

}  // namespace sdoh
