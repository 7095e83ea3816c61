#include "bcg/svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace bcg::svgplot {

namespace {

constexpr int kWidth = 420;
constexpr int kHeight = 320;
constexpr int kMarginTop = 36;
constexpr int kMarginBottom = 34;
constexpr int kMarginLeft = 52;

std::string num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", x);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::string violin_svg(const std::string& title,
                       const std::vector<Series>& series) {
  const char* fills[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52"};

  double lo = 0.0, hi = 1.0;
  bool any = false;
  for (const auto& s : series)
    for (double v : s.values) {
      if (!any) {
        lo = hi = v;
        any = true;
      } else {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  if (!any) {
    lo = 0.0;
    hi = 1.0;
  }
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  const double plot_h = kHeight - kMarginTop - kMarginBottom;
  const auto to_y = [&](double v) {
    return kMarginTop + plot_h * (1.0 - (v - lo) / (hi - lo));
  };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         std::to_string(kWidth) + "\" height=\"" + std::to_string(kHeight) +
         "\" viewBox=\"0 0 " + std::to_string(kWidth) + " " +
         std::to_string(kHeight) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + std::to_string(kWidth / 2) +
         "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"14\">" + title + "</text>\n";

  // y axis with 5 ticks
  svg += "<line x1=\"" + std::to_string(kMarginLeft) + "\" y1=\"" +
         num(to_y(lo)) + "\" x2=\"" + std::to_string(kMarginLeft) +
         "\" y2=\"" + num(to_y(hi)) + "\" stroke=\"#333\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = lo + (hi - lo) * i / 4.0;
    svg += "<line x1=\"" + std::to_string(kMarginLeft - 4) + "\" y1=\"" +
           num(to_y(v)) + "\" x2=\"" + std::to_string(kMarginLeft) +
           "\" y2=\"" + num(to_y(v)) + "\" stroke=\"#333\"/>\n";
    svg += "<text x=\"" + std::to_string(kMarginLeft - 8) + "\" y=\"" +
           num(to_y(v) + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"10\">" + num(v) + "</text>\n";
  }

  const double slot =
      static_cast<double>(kWidth - kMarginLeft - 16) /
      static_cast<double>(std::max<std::size_t>(1, series.size()));
  const double half_max = 0.38 * slot;

  for (std::size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    const double cx = kMarginLeft + slot * (static_cast<double>(si) + 0.5);
    const char* fill = fills[si % 4];

    if (!s.values.empty()) {
      // Gaussian KDE, Silverman bandwidth, over 64 points.
      const std::size_t n = s.values.size();
      double mean = 0.0;
      for (double v : s.values) mean += v;
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (double v : s.values) var += (v - mean) * (v - mean);
      var /= static_cast<double>(n);
      double bw = 1.06 * std::sqrt(var) *
                  std::pow(static_cast<double>(n), -0.2);
      if (bw < 1e-9) bw = 0.02 * (hi - lo);

      const int grid = 64;
      std::vector<double> dens(grid);
      double dmax = 0.0;
      for (int gi = 0; gi < grid; ++gi) {
        const double v = lo + (hi - lo) * gi / (grid - 1.0);
        double acc = 0.0;
        for (double x : s.values) {
          const double z = (v - x) / bw;
          acc += std::exp(-0.5 * z * z);
        }
        dens[static_cast<std::size_t>(gi)] = acc;
        dmax = std::max(dmax, acc);
      }
      if (dmax <= 0.0) dmax = 1.0;

      std::string pts;
      for (int gi = 0; gi < grid; ++gi) {
        const double v = lo + (hi - lo) * gi / (grid - 1.0);
        const double w =
            half_max * dens[static_cast<std::size_t>(gi)] / dmax;
        pts += num(cx + w) + "," + num(to_y(v)) + " ";
      }
      for (int gi = grid - 1; gi >= 0; --gi) {
        const double v = lo + (hi - lo) * gi / (grid - 1.0);
        const double w =
            half_max * dens[static_cast<std::size_t>(gi)] / dmax;
        pts += num(cx - w) + "," + num(to_y(v)) + " ";
      }
      svg += "<polygon points=\"" + pts + "\" fill=\"" + fill +
             "\" fill-opacity=\"0.55\" stroke=\"" + fill + "\"/>\n";

      const double med = median(s.values);
      svg += "<line x1=\"" + num(cx - half_max) + "\" y1=\"" + num(to_y(med)) +
             "\" x2=\"" + num(cx + half_max) + "\" y2=\"" + num(to_y(med)) +
             "\" stroke=\"#222\" stroke-width=\"1.5\"/>\n";
    }

    svg += "<text x=\"" + num(cx) + "\" y=\"" +
           std::to_string(kHeight - 12) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">" + s.label + " (n=" +
           std::to_string(s.values.size()) + ")</text>\n";
  }

  svg += "</svg>\n";
  return svg;
}

}  // namespace bcg::svgplot
