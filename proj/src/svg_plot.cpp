#include "sdoh/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sdoh {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#17becf", "#bcbd22"};
constexpr int kPaletteSize = 10;

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(6);
  out << v;
  return out.str();
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

std::string render_line_chart_svg(const std::string& title, const std::string& x_label,
                                  const std::string& y_label,
                                  const std::vector<SvgSeries>& series) {
  const double width = 720, height = 440;
  const double left = 70, right = 40, top = 50, bottom = 60;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;

  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;
  bool any = false;
  auto grow = [&](double x, double y) {
    if (!any) {
      x_min = x_max = x;
      y_min = y_max = y;
      any = true;
      return;
    }
    x_min = std::min(x_min, x);
    x_max = std::max(x_max, x);
    y_min = std::min(y_min, y);
    y_max = std::max(y_max, y);
  };
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) grow(x, y);
    if (s.marker) grow(s.marker->first, s.marker->second);
  }
  if (x_max == x_min) x_max = x_min + 1;
  if (y_max == y_min) y_max = y_min + 1;
  // small margin so curves do not touch the frame
  double y_pad = 0.05 * (y_max - y_min);
  y_min -= y_pad;
  y_max += y_pad;

  auto px = [&](double x) { return left + (x - x_min) / (x_max - x_min) * plot_w; };
  auto py = [&](double y) { return top + plot_h - (y - y_min) / (y_max - y_min) * plot_h; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\""
      << " font-size=\"16\">" << escape_xml(title) << "</text>\n";

  // frame and ticks
  svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\""
      << plot_h << "\" fill=\"none\" stroke=\"#333\"/>\n";
  const int n_ticks = 5;
  for (int i = 0; i <= n_ticks; ++i) {
    double fx = x_min + (x_max - x_min) * i / n_ticks;
    double fy = y_min + (y_max - y_min) * i / n_ticks;
    svg << "<line x1=\"" << px(fx) << "\" y1=\"" << top + plot_h << "\" x2=\"" << px(fx)
        << "\" y2=\"" << top + plot_h + 5 << "\" stroke=\"#333\"/>\n";
    svg << "<text x=\"" << px(fx) << "\" y=\"" << top + plot_h + 20
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(fx)
        << "</text>\n";
    svg << "<line x1=\"" << left - 5 << "\" y1=\"" << py(fy) << "\" x2=\"" << left << "\" y2=\""
        << py(fy) << "\" stroke=\"#333\"/>\n";
    svg << "<text x=\"" << left - 9 << "\" y=\"" << py(fy) + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(fy)
        << "</text>\n";
  }
  svg << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 14
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
      << escape_xml(x_label) << "</text>\n";
  svg << "<text x=\"18\" y=\"" << top + plot_h / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 18 "
      << top + plot_h / 2 << ")\">" << escape_xml(y_label) << "</text>\n";

  // series lines
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % kPaletteSize];
    if (!series[s].points.empty()) {
      svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (const auto& [x, y] : series[s].points) {
        svg << fmt(px(x)) << "," << fmt(py(y)) << " ";
      }
      svg << "\"/>\n";
    }
    if (series[s].marker) {
      double mx = px(series[s].marker->first), my = py(series[s].marker->second);
      svg << "<polygon fill=\"" << color << "\" points=\"" << fmt(mx) << "," << fmt(my - 6) << " "
          << fmt(mx - 5) << "," << fmt(my + 4) << " " << fmt(mx + 5) << "," << fmt(my + 4)
          << "\"/>\n";
    }
  }

  // legend
  double ly = top + 8;
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % kPaletteSize];
    svg << "<line x1=\"" << left + plot_w - 150 << "\" y1=\"" << ly << "\" x2=\""
        << left + plot_w - 130 << "\" y2=\"" << ly << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << left + plot_w - 124 << "\" y=\"" << ly + 4
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << escape_xml(series[s].label)
        << "</text>\n";
    ly += 16;
  }

  svg << "</svg>\n";
  return svg.str();
}

}  // namespace sdoh
