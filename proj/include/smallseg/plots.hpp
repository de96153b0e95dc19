#pragma once

#include <string>
#include <vector>

namespace smallseg::plots {

struct Series {
  std::string label;  // recorded in the sidecar legend file
  std::vector<double> values;
};

/// Line plot, one colored polyline per series, auto-scaled y-range. A sidecar
/// <path>.legend.txt maps colors to labels.
void line_plot(const std::string& path, const std::vector<Series>& series, int width = 640,
               int height = 400);

/// Overlaid histograms over the fixed range [0,1].
void histogram_plot(const std::string& path, const std::vector<Series>& series,
                    int bins = 20, int width = 640, int height = 400);

}  // namespace smallseg::plots
