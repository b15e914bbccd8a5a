#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bundlembed/core.hpp"

namespace bundlembed {

enum class Shape { letter_A, letter_O, butterfly, gaussian_blobs, ring, grid_3d, helix_3d, custom };
enum class IndexOrder { sequential, random };

struct ShapeSpec {
    Shape shape = Shape::letter_A;
    std::size_t n_points = 214;
    IndexOrder index_order = IndexOrder::sequential;
    // Only for Shape::custom: a polyline skeleton file.
    std::optional<std::filesystem::path> skeleton_path;
};

std::string to_string(Shape s);
Shape parse_shape(const std::string& s);
std::string to_string(IndexOrder o);
IndexOrder parse_index_order(const std::string& s);
std::size_t shape_dim(Shape s);

// Polylines, each a list of vertices of equal dimension (2 or 3).
using Polyline = std::vector<std::vector<double>>;
using Skeleton = std::vector<Polyline>;

// Parses "x y [z]" per line, blank line between polylines, '#' comments.
Skeleton parse_skeleton(const std::string& text);
Skeleton load_skeleton(const std::filesystem::path& path);
// Built-in skeletons for letter_A, letter_O and butterfly.
const Skeleton& builtin_skeleton(Shape s);

GroundTruth generate_ground_truth(std::span<const ShapeSpec> specs, std::uint64_t seed);

struct KMeansResult {
    std::vector<int> labels;         // cluster label per input row, 0..k'-1
    Partition clusters;              // row positions, ordered by smallest member
    std::vector<double> wcss;        // within-cluster SS after each assignment step
    std::size_t iterations = 0;
};

// k-means++ seeding: indices of the chosen center rows. May return fewer than
// k when the remaining points all coincide with chosen centers.
std::vector<std::size_t> kmeanspp_seeds(const CoordTable& coords, std::size_t k, std::uint64_t seed);

// Lloyd's algorithm from k-means++ seeds, to convergence or max_iterations.
KMeansResult kmeans_answer(const CoordTable& coords, std::size_t bin_count, std::uint64_t seed,
                           std::size_t max_iterations = 100);

// Gathers rows `items` of `table` into a new table.
CoordTable gather_rows(const CoordTable& table, std::span<const ItemIndex> items);

// Answers each query by clustering its items in one ground-truth aspect.
std::vector<Bundle> simulate_answers(const GroundTruth& gt,
                                     const std::vector<std::vector<ItemIndex>>& queries,
                                     const QueryConfig& qc, std::uint64_t seed,
                                     QueryId first_query_id = 0, int phase = 0);

struct NoiseSpec {
    double level = 0.0;
    std::uint64_t seed = 0;
};

// Flips theta on exactly round(level * total) tuples chosen uniformly
// without replacement across all bundles.
std::vector<Bundle> inject_noise(std::vector<Bundle> bundles, const NoiseSpec& noise);

// Triplets (i, j, k) with d(i,j) < d(i,k) strictly in a uniformly chosen aspect.
std::vector<Triplet> sample_triplets(const GroundTruth& gt, std::size_t count, std::uint64_t seed);

}  // namespace bundlembed
