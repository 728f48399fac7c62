#pragma once

#include <string>
#include <vector>

namespace agest {

// A rendered chart: the SVG itself plus a CSV sidecar carrying the exact
// plotted numbers, so tests (and auditors) never have to parse SVG.
struct PlotDocument {
  std::string svg;
  std::string csv;

  void write(const std::string& svg_path) const;  // also writes <svg_path minus .svg>.csv
};

// Sidecar path for an SVG path: "x/y.svg" -> "x/y.csv".
std::string sidecar_path(const std::string& svg_path);

namespace svg {

struct Bar {
  double value = 0.0;
  std::string role = "none";  // none | predicted | actual
};

struct BarChartOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  double y_max = 1.0;
  int width = 808;
  int height = 360;
};

// Bars left to right at x = 0..bars.size()-1. Bars with role "predicted"
// are drawn red, "actual" green, everything else grey.
std::string bar_chart(const std::vector<Bar>& bars, const BarChartOptions& options);

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct LineChartOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  double x_min = 0.0, x_max = 1.0;
  double y_min = 0.0, y_max = 1.0;
  int width = 640;
  int height = 400;
};

std::string line_chart(const std::vector<Point>& points, const LineChartOptions& options);

std::string escape(const std::string& text);

}  // namespace svg
}  // namespace agest
