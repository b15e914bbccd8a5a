#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bundlembed/core.hpp"

namespace bundlembed {

struct PlotOptions {
    double size = 480.0;       // square canvas, pixels
    double padding = 24.0;
    double point_radius = 3.0;
    std::string title;
};

// Continuous map of t in [0, 1] to RGB (viridis-like ramp).
std::array<int, 3> index_color(double t);

// Scatter of one coordinate table, points coloured by item index. 3D tables
// are projected orthographically from a fixed viewpoint. Throws on empty
// tables or dim > 3.
std::string render_scatter_svg(const CoordTable& table, const PlotOptions& opts = {});

// One SVG per table, named <stem>_<index>.svg. Returns the written paths.
std::vector<std::filesystem::path> write_scatter_svgs(std::span<const CoordTable> tables,
                                                      const std::filesystem::path& out_dir, const std::string& stem);

}  // namespace bundlembed
