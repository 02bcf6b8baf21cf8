#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace slackdyn {

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

struct PlotOptions {
    std::string title;
    std::string x_label = "t [s]";
    std::string y_label;
    int width = 720;
    int height = 420;
};

/// Round tick positions covering [lo, hi].
std::vector<double> nice_ticks(double lo, double hi, int target = 6);

/// Single-panel line chart, one polyline per series.
std::string render_svg(const std::vector<PlotSeries>& series, const PlotOptions& opts);
void write_svg(const std::filesystem::path& path, const std::vector<PlotSeries>& series, const PlotOptions& opts);

}  // namespace slackdyn
