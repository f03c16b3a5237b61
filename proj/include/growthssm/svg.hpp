#pragma once

#include <optional>
#include <string>
#include <vector>

#include "growthssm/analysis.hpp"

namespace growthssm {

struct SvgLine {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::string color = "#1f4e99";
};

struct SvgPoints {
    std::vector<double> x;
    std::vector<double> y;
};

struct SvgChart {
    std::string title;
    std::string x_label = "time";
    std::string y_label = "value";
    std::optional<Band> band;
    std::vector<SvgLine> lines;
    SvgPoints points;
};

/// Minimal line chart: axes with tick labels, optional shaded band, polylines
/// and scatter points.
std::string render_svg(const SvgChart& chart, int width = 720, int height = 420);

} // namespace growthssm
