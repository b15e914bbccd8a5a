#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bundlembed/plot.hpp"
#include "bundlembed/synthgen.hpp"

using namespace bundlembed;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t count(const std::string& s, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
    return n;
}

}  // namespace

TEST_CASE("index colours span the ramp") {
    const auto lo = index_color(0.0), hi = index_color(1.0);
    CHECK(lo != hi);
    for (double t : {-1.0, 0.0, 0.3, 1.0, 2.0})
        for (int c : index_color(t)) {
            CHECK(c >= 0);
            CHECK(c <= 255);
        }
}

TEST_CASE("scatter has one circle per point and is deterministic") {
    CoordTable t(5, 2, {0, 0, 1, 0, 0, 1, 1, 1, 0.5, 0.5});
    PlotOptions o;
    o.title = "demo";
    const auto svg = render_scatter_svg(t, o);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(count(svg, "<circle") == 5);
    CHECK(svg.find("demo") != std::string::npos);
    CHECK(render_scatter_svg(t, o) == svg);
}

TEST_CASE("1D, 2D and 3D tables render; dim 4 and empty do not") {
    CHECK(count(render_scatter_svg(CoordTable(4, 1, {0, 1, 2, 3})), "<circle") == 4);
    const auto helix = generate_ground_truth(std::vector<ShapeSpec>{{Shape::helix_3d, 100, IndexOrder::sequential, {}}}, 1);
    CHECK(count(render_scatter_svg(helix.aspects[0]), "<circle") == 100);
    CHECK_THROWS(render_scatter_svg(CoordTable(3, 4)));
    CHECK_THROWS(render_scatter_svg(CoordTable()));
    CoordTable bad(2, 2, {0, 0, NAN, 1});
    CHECK_THROWS(render_scatter_svg(bad));
}

TEST_CASE("write_scatter_svgs writes byte-identical files and nothing on error") {
    const auto dir = fs::temp_directory_path() / "bundlembed_test_plot";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::vector<CoordTable> tables = {CoordTable(3, 2, {0, 0, 1, 1, 2, 0}), CoordTable(3, 2, {1, 0, 0, 1, 2, 2})};
    const auto paths = write_scatter_svgs(tables, dir, "emb");
    REQUIRE(paths.size() == 2);
    CHECK(paths[0].filename() == "emb_0.svg");
    CHECK(paths[1].filename() == "emb_1.svg");
    const auto first = slurp(paths[0]);
    write_scatter_svgs(tables, dir, "emb");
    CHECK(slurp(paths[0]) == first);

    const std::vector<CoordTable> broken = {CoordTable(3, 2, {0, 0, 1, 1, 2, 0}), CoordTable()};
    CHECK_THROWS(write_scatter_svgs(broken, dir, "broken"));
    CHECK_FALSE(fs::exists(dir / "broken_0.svg"));
    CHECK_THROWS(write_scatter_svgs(std::vector<CoordTable>{}, dir, "none"));
    fs::remove_all(dir);
}
