#include "agest/plot.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/format.h>

#include "agest/error.hpp"

namespace agest {

std::string sidecar_path(const std::string& svg_path) {
  const auto dot = svg_path.rfind('.');
  const auto slash = svg_path.find_last_of("/\\");
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return svg_path + ".csv";
  return svg_path.substr(0, dot) + ".csv";
}

void PlotDocument::write(const std::string& svg_path) const {
  auto dump = [](const std::string& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << body;
  };
  dump(svg_path, svg);
  dump(sidecar_path(svg_path), csv);
}

namespace svg {

std::string escape(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
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

namespace {

constexpr int kLeft = 56, kRight = 16, kTop = 36, kBottom = 44;

std::string header(int width, int height, const std::string& title) {
  return fmt::format(
             "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
             "font-family=\"sans-serif\" font-size=\"11\">\n",
             width, height) +
         fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", width, height) +
         fmt::format("<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n", width / 2,
                     escape(title));
}

std::string axes(int width, int height, const std::string& x_label, const std::string& y_label) {
  const int x0 = kLeft, y0 = height - kBottom, x1 = width - kRight, y1 = kTop;
  std::string s;
  s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", x0, y0, x1);
  s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", x0, y0, y1);
  s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", (x0 + x1) / 2, height - 8,
                   escape(x_label));
  s += fmt::format("<text x=\"14\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {0})\">{1}</text>\n",
                   (y0 + y1) / 2, escape(y_label));
  return s;
}

std::string y_ticks(int width, int height, double y_min, double y_max) {
  const int x0 = kLeft, y0 = height - kBottom, y1 = kTop;
  std::string s;
  for (int i = 0; i <= 4; ++i) {
    const double v = y_min + (y_max - y_min) * i / 4.0;
    const double y = y0 - (y0 - y1) * i / 4.0;
    s += fmt::format("<line x1=\"{}\" y1=\"{:.2f}\" x2=\"{}\" y2=\"{:.2f}\" stroke=\"#dddddd\"/>\n", x0, y,
                     width - kRight, y);
    s += fmt::format("<text x=\"{}\" y=\"{:.2f}\" text-anchor=\"end\">{:.2f}</text>\n", x0 - 4, y + 4, v);
  }
  return s;
}

const char* fill_for(const std::string& role) {
  if (role == "predicted") return "#d62728";
  if (role == "actual") return "#2ca02c";
  return "#8c8c8c";
}

}  // namespace

std::string bar_chart(const std::vector<Bar>& bars, const BarChartOptions& o) {
  if (bars.empty()) throw std::invalid_argument("bar_chart: no bars");
  const double y_max = o.y_max > 0.0 ? o.y_max : 1.0;
  const double plot_w = o.width - kLeft - kRight;
  const double plot_h = o.height - kTop - kBottom;
  const double slot = plot_w / static_cast<double>(bars.size());
  const int base = o.height - kBottom;

  std::string s = header(o.width, o.height, o.title);
  s += y_ticks(o.width, o.height, 0.0, y_max);
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double h = std::clamp(bars[i].value / y_max, 0.0, 1.0) * plot_h;
    s += fmt::format(
        "<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\" data-x=\"{}\" "
        "data-value=\"{:.9f}\" data-role=\"{}\"/>\n",
        kLeft + slot * static_cast<double>(i) + slot * 0.1, base - h, slot * 0.8, h, fill_for(bars[i].role), i,
        bars[i].value, bars[i].role);
  }
  for (std::size_t i = 0; i < bars.size(); i += 10) {
    s += fmt::format("<text x=\"{:.2f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                     kLeft + slot * (static_cast<double>(i) + 0.5), base + 14, i);
  }
  s += axes(o.width, o.height, o.x_label, o.y_label);
  s += "</svg>\n";
  return s;
}

std::string line_chart(const std::vector<Point>& points, const LineChartOptions& o) {
  if (points.empty()) throw std::invalid_argument("line_chart: empty series");
  const double plot_w = o.width - kLeft - kRight;
  const double plot_h = o.height - kTop - kBottom;
  const double x_span = o.x_max > o.x_min ? o.x_max - o.x_min : 1.0;
  const double y_span = o.y_max > o.y_min ? o.y_max - o.y_min : 1.0;
  auto px = [&](double x) { return kLeft + (x - o.x_min) / x_span * plot_w; };
  auto py = [&](double y) { return (o.height - kBottom) - (y - o.y_min) / y_span * plot_h; };

  std::string s = header(o.width, o.height, o.title);
  s += y_ticks(o.width, o.height, o.y_min, o.y_max);
  std::string path;
  for (const auto& p : points) {
    path += fmt::format("{}{:.2f},{:.2f}", path.empty() ? "M" : " L", px(p.x), py(p.y));
  }
  s += fmt::format("<path d=\"{}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\"/>\n", path);
  for (const auto& p : points) {
    s += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"#1f77b4\" data-x=\"{}\" data-value=\"{:.6f}\"/>\n",
                     px(p.x), py(p.y), p.x, p.y);
    s += fmt::format("<text x=\"{:.2f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", px(p.x),
                     o.height - kBottom + 14, p.x);
  }
  s += axes(o.width, o.height, o.x_label, o.y_label);
  s += "</svg>\n";
  return s;
}

}  // namespace svg
}  // namespace agest
