#include "bundlembed/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace bundlembed {

namespace {

constexpr std::array<std::array<double, 3>, 5> kRamp = {{
    {68, 1, 84},
    {59, 82, 139},
    {33, 145, 140},
    {94, 201, 98},
    {253, 231, 37},
}};

// Fixed decimal formatting so output is byte-stable.
std::string fixed(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::vector<std::array<double, 2>> project(const CoordTable& t) {
    std::vector<std::array<double, 2>> out(t.rows());
    if (t.dim() == 1) {
        for (std::size_t i = 0; i < t.rows(); ++i) out[i] = {t(i, 0), 0.0};
    } else if (t.dim() == 2) {
        for (std::size_t i = 0; i < t.rows(); ++i) out[i] = {t(i, 0), t(i, 1)};
    } else {
        // Orthographic view: yaw about z, then pitch about x, drop depth.
        const double yaw = 35.0 * std::numbers::pi / 180.0;
        const double pitch = 25.0 * std::numbers::pi / 180.0;
        for (std::size_t i = 0; i < t.rows(); ++i) {
            const double x = t(i, 0), y = t(i, 1), z = t(i, 2);
            const double xr = std::cos(yaw) * x - std::sin(yaw) * y;
            const double yr = std::sin(yaw) * x + std::cos(yaw) * y;
            out[i] = {xr, std::cos(pitch) * z - std::sin(pitch) * yr};
        }
    }
    return out;
}

}  // namespace

std::array<int, 3> index_color(double t) {
    t = std::clamp(t, 0.0, 1.0);
    const double pos = t * static_cast<double>(kRamp.size() - 1);
    const auto lo = std::min(static_cast<std::size_t>(pos), kRamp.size() - 2);
    const double f = pos - static_cast<double>(lo);
    std::array<int, 3> rgb{};
    for (std::size_t c = 0; c < 3; ++c)
        rgb[c] = static_cast<int>(std::lround(kRamp[lo][c] + f * (kRamp[lo + 1][c] - kRamp[lo][c])));
    return rgb;
}

std::string render_scatter_svg(const CoordTable& table, const PlotOptions& opts) {
    if (table.empty()) throw std::invalid_argument("plot: empty coordinate table");
    if (table.dim() > 3) throw std::invalid_argument("plot: only 1D, 2D and 3D tables can be drawn");
    if (!table.all_finite()) throw std::invalid_argument("plot: non-finite coordinates");

    const auto pts = project(table);
    double lo_x = std::numeric_limits<double>::infinity(), hi_x = -lo_x;
    double lo_y = lo_x, hi_y = -lo_x;
    for (const auto& p : pts) {
        lo_x = std::min(lo_x, p[0]);
        hi_x = std::max(hi_x, p[0]);
        lo_y = std::min(lo_y, p[1]);
        hi_y = std::max(hi_y, p[1]);
    }
    const double span = std::max({hi_x - lo_x, hi_y - lo_y, 1e-12});
    const double scale = (opts.size - 2.0 * opts.padding) / span;
    const double cx = 0.5 * (lo_x + hi_x), cy = 0.5 * (lo_y + hi_y);

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(opts.size) << "\" height=\""
        << fixed(opts.size) << "\" viewBox=\"0 0 " << fixed(opts.size) << ' ' << fixed(opts.size) << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!opts.title.empty())
        svg << "<text x=\"" << fixed(opts.padding) << "\" y=\"" << fixed(opts.padding * 0.7)
            << "\" font-family=\"sans-serif\" font-size=\"12\">" << opts.title << "</text>\n";
    const double denom = pts.size() > 1 ? static_cast<double>(pts.size() - 1) : 1.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double x = opts.size / 2.0 + (pts[i][0] - cx) * scale;
        const double y = opts.size / 2.0 - (pts[i][1] - cy) * scale;  // SVG y grows downward
        const auto c = index_color(static_cast<double>(i) / denom);
        svg << "<circle cx=\"" << fixed(x) << "\" cy=\"" << fixed(y) << "\" r=\"" << fixed(opts.point_radius)
            << "\" fill=\"rgb(" << c[0] << ',' << c[1] << ',' << c[2] << ")\"/>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

std::vector<std::filesystem::path> write_scatter_svgs(std::span<const CoordTable> tables,
                                                      const std::filesystem::path& out_dir, const std::string& stem) {
    if (tables.empty()) throw std::invalid_argument("plot: nothing to draw");
    // Render everything first so a bad table leaves no partial output.
    std::vector<std::string> docs;
    for (std::size_t s = 0; s < tables.size(); ++s) {
        PlotOptions opts;
        opts.title = stem + " " + std::to_string(s);
        docs.push_back(render_scatter_svg(tables[s], opts));
    }
    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> paths;
    for (std::size_t s = 0; s < docs.size(); ++s) {
        auto path = out_dir / (stem + "_" + std::to_string(s) + ".svg");
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        out << docs[s];
        paths.push_back(std::move(path));
    }
    return paths;
}

}  // namespace bundlembed
