#pragma once

#include "mslam/geometry.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace mslam {

struct PlotSeries {
    std::string name;
    std::vector<Point2> points;
    std::string color; ///< empty picks from the palette
};

struct PlotOptions {
    std::string title;
    double width_px = 640.0;
    double margin_px = 56.0;
};

namespace detail {

inline const char* palette(std::size_t k)
{
    static const char* colors[] = {"#222222", "#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd"};
    return colors[k % 6];
}

/// 1, 2 or 5 times a power of ten, giving roughly `target` ticks over `span`.
inline double tick_step(double span, int target = 6)
{
    const double raw = span / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (double m : {1.0, 2.0, 5.0}) {
        if (m * mag >= raw) return m * mag;
    }
    return 10.0 * mag;
}

inline std::string xml_escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

} // namespace detail

/// Overlays trajectories in one metric frame with equal axis scaling. All
/// numbers are printed at fixed precision so identical input gives identical
/// bytes.
inline std::string render_svg(const std::vector<PlotSeries>& series, const PlotOptions& opt = {})
{
    double xmin = std::numeric_limits<double>::infinity(), ymin = xmin;
    double xmax = -xmin, ymax = -xmin;
    for (const auto& s : series) {
        for (const auto& p : s.points) {
            xmin = std::min(xmin, p.x);
            xmax = std::max(xmax, p.x);
            ymin = std::min(ymin, p.y);
            ymax = std::max(ymax, p.y);
        }
    }
    if (!std::isfinite(xmin)) xmin = ymin = 0.0, xmax = ymax = 1.0;
    const double pad = 0.03 * std::max({xmax - xmin, ymax - ymin, 1.0});
    xmin -= pad, xmax += pad, ymin -= pad, ymax += pad;

    const double m = opt.margin_px;
    const double scale = (opt.width_px - 2.0 * m) / (xmax - xmin);
    const double height_px = (ymax - ymin) * scale + 2.0 * m;
    auto px = [&](double x) { return m + (x - xmin) * scale; };
    auto py = [&](double y) { return height_px - m - (y - ymin) * scale; };

    std::string out;
    out += fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" "
                       "viewBox=\"0 0 {:.0f} {:.0f}\" font-family=\"sans-serif\" font-size=\"11\">\n",
                       opt.width_px, height_px, opt.width_px, height_px);
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!opt.title.empty()) {
        out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                           opt.width_px / 2.0, m / 2.0, detail::xml_escape(opt.title));
    }
    out += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"none\" "
                       "stroke=\"#888\"/>\n",
                       m, m, opt.width_px - 2.0 * m, height_px - 2.0 * m);

    const double step = detail::tick_step(std::max(xmax - xmin, ymax - ymin));
    for (double t = std::ceil(xmin / step) * step; t <= xmax; t += step) {
        const double x = px(t);
        out += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"#888\"/>\n", x,
                           height_px - m, x, height_px - m + 5.0);
        out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{:g}</text>\n", x,
                           height_px - m + 17.0, std::round(t / step) * step + 0.0);
    }
    for (double t = std::ceil(ymin / step) * step; t <= ymax; t += step) {
        const double y = py(t);
        out += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"#888\"/>\n",
                           m - 5.0, y, m, y);
        out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"end\">{:g}</text>\n", m - 8.0, y + 4.0,
                           std::round(t / step) * step + 0.0);
    }
    out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">x [m]</text>\n", opt.width_px / 2.0,
                       height_px - m / 4.0);
    out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\" transform=\"rotate(-90 {:.2f} "
                       "{:.2f})\">y [m]</text>\n",
                       m / 4.0, height_px / 2.0, m / 4.0, height_px / 2.0);

    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const std::string color = s.color.empty() ? detail::palette(k) : s.color;
        out += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\" points=\"", color);
        for (std::size_t i = 0; i < s.points.size(); ++i) {
            out += fmt::format("{}{:.2f},{:.2f}", i == 0 ? "" : " ", px(s.points[i].x), py(s.points[i].y));
        }
        out += "\"/>\n";
        const double ly = m + 14.0 + 16.0 * static_cast<double>(k);
        out += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"{}\" "
                           "stroke-width=\"2\"/>\n",
                           m + 10.0, ly - 4.0, m + 30.0, ly - 4.0, color);
        out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\">{}</text>\n", m + 36.0, ly, detail::xml_escape(s.name));
    }
    out += "</svg>\n";
    return out;
}

} // namespace mslam
