#pragma once

#include <string>
#include <vector>

// Self-contained SVG distribution panels (violin-style KDE silhouettes
// with median ticks). No display or plotting dependency.

namespace bcg::svgplot {

struct Series {
  std::string label;
  std::vector<double> values;
};

std::string violin_svg(const std::string& title,
                       const std::vector<Series>& series);

}  // namespace bcg::svgplot
