#include "slackdyn/svg_plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace slackdyn {

namespace {

constexpr std::array<const char*, 6> kColors = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string fmt(double v, const char* spec = "%.6g")
{
    char buf[32];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

std::string escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<':
            out += "&lt;";
            break;
        case '>':
            out += "&gt;";
            break;
        case '&':
            out += "&amp;";
            break;
        case '"':
            out += "&quot;";
            break;
        default:
            out += c;
        }
    }
    return out;
}

}  // namespace

std::vector<double> nice_ticks(double lo, double hi, int target)
{
    if (!(hi > lo)) {
        const double pad = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
        lo -= pad;
        hi += pad;
    }
    const double raw = (hi - lo) / std::max(target, 1);
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
        if (m * mag >= raw) {
            step = m * mag;
            break;
        }
    }
    std::vector<double> ticks;
    for (double t = std::ceil(lo / step - 1e-9) * step; t <= hi + step * 1e-9; t += step) {
        ticks.push_back(std::abs(t) < step * 1e-9 ? 0.0 : t);
    }
    return ticks;
}

std::string render_svg(const std::vector<PlotSeries>& series, const PlotOptions& opts)
{
    double x0 = std::numeric_limits<double>::infinity();
    double x1 = -x0;
    double y0 = x0;
    double y1 = -x0;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
                continue;
            }
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    }
    if (!std::isfinite(x0)) {
        x0 = 0.0;
        x1 = 1.0;
        y0 = 0.0;
        y1 = 1.0;
    }
    const auto xt = nice_ticks(x0, x1);
    const auto yt = nice_ticks(y0, y1);
    x0 = std::min(x0, xt.front());
    x1 = std::max(x1, xt.back());
    y0 = std::min(y0, yt.front());
    y1 = std::max(y1, yt.back());
    if (!(x1 > x0)) {
        x1 = x0 + 1.0;
    }
    if (!(y1 > y0)) {
        y1 = y0 + 1.0;
    }

    const double left = 80.0;
    const double right = 20.0;
    const double top = 40.0;
    const double bottom = 55.0;
    const double pw = opts.width - left - right;
    const double ph = opts.height - top - bottom;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return top + (y1 - y) / (y1 - y0) * ph; };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opts.width << "\" height=\"" << opts.height
        << "\" viewBox=\"0 0 " << opts.width << ' ' << opts.height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!opts.title.empty()) {
        svg << "<text x=\"" << opts.width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
            << escape(opts.title) << "</text>\n";
    }
    svg << "<g stroke=\"#dddddd\" stroke-width=\"1\">\n";
    for (double t : xt) {
        svg << "<line x1=\"" << fmt(px(t), "%.2f") << "\" y1=\"" << top << "\" x2=\"" << fmt(px(t), "%.2f")
            << "\" y2=\"" << top + ph << "\"/>\n";
    }
    for (double t : yt) {
        svg << "<line x1=\"" << left << "\" y1=\"" << fmt(py(t), "%.2f") << "\" x2=\"" << left + pw << "\" y2=\""
            << fmt(py(t), "%.2f") << "\"/>\n";
    }
    svg << "</g>\n";
    svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (double t : xt) {
        svg << "<text x=\"" << fmt(px(t), "%.2f") << "\" y=\"" << top + ph + 16
            << "\" text-anchor=\"middle\">" << fmt(t) << "</text>\n";
    }
    for (double t : yt) {
        svg << "<text x=\"" << left - 6 << "\" y=\"" << fmt(py(t) + 4.0, "%.2f") << "\" text-anchor=\"end\">"
            << fmt(t) << "</text>\n";
    }
    svg << "<text x=\"" << left + pw / 2 << "\" y=\"" << opts.height - 12 << "\" text-anchor=\"middle\">"
        << escape(opts.x_label) << "</text>\n";
    svg << "<text transform=\"translate(16 " << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
        << escape(opts.y_label) << "</text>\n";

    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* color = kColors[k % kColors.size()];
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) {
                svg << fmt(px(s.x[i]), "%.2f") << ',' << fmt(py(s.y[i]), "%.2f") << ' ';
            }
        }
        svg << "\"/>\n";
        const double ly = top + 16.0 + 16.0 * static_cast<double>(k);
        svg << "<line x1=\"" << left + pw - 120 << "\" y1=\"" << ly - 4 << "\" x2=\"" << left + pw - 100
            << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        svg << "<text x=\"" << left + pw - 94 << "\" y=\"" << ly << "\">" << escape(s.label) << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

void write_svg(const std::filesystem::path& path, const std::vector<PlotSeries>& series, const PlotOptions& opts)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << render_svg(series, opts);
}

}  // namespace slackdyn
