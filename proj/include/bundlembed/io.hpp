#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "bundlembed/core.hpp"
#include "bundlembed/metrics.hpp"
#include "bundlembed/optimizer.hpp"
#include "bundlembed/synthgen.hpp"

namespace bundlembed {

struct ExperimentSpec;

// Shortest round-trip decimal representation.
std::string format_double(double v);

// Coordinate tables: CSV with header item_id,aspect_id,x,y[,z], one row per
// (aspect, item), aspects in order.
void write_tables(std::ostream& out, std::span<const CoordTable> tables);
std::vector<CoordTable> read_tables(std::istream& in);

void write_ground_truth(const std::filesystem::path& path, const GroundTruth& gt);
GroundTruth read_ground_truth(const std::filesystem::path& path);
void write_embedding(const std::filesystem::path& path, const MultiEmbedding& emb);
MultiEmbedding read_embedding(const std::filesystem::path& path);

// Bundles: JSON Lines, one record per query:
//   {"query_id", "items", "clusters", "source_aspect"?, "phase", "flips"?}
// Tuples are re-derived from clusters on load; "flips" lists [i, j] pairs
// whose label is reversed relative to the clusters. Bundles without clusters
// (built from triplets) store "tuples": [[i, j, theta], ...] instead.
nlohmann::json bundle_to_json(const Bundle& b);
Bundle bundle_from_json(const nlohmann::json& j);
void write_bundles(std::ostream& out, std::span<const Bundle> bundles);
std::vector<Bundle> read_bundles(std::istream& in);
void write_bundles(const std::filesystem::path& path, std::span<const Bundle> bundles);
void append_bundles(const std::filesystem::path& path, std::span<const Bundle> bundles);
std::vector<Bundle> read_bundles(const std::filesystem::path& path);

// Weights: CSV row,beta_0..beta_{S-1},alpha_0..alpha_{S-1}. Alpha is
// recomputed from beta on load.
void write_weights(std::ostream& out, const AspectWeights& w);
AspectWeights read_weights(std::istream& in);
void write_weights(const std::filesystem::path& path, const AspectWeights& w);
AspectWeights read_weights(const std::filesystem::path& path);

// Trace: CSV iteration,loss,ndcg,uncertainty with empty cells for absent values.
void write_trace(std::ostream& out, std::span<const TraceRecord> trace);
std::vector<TraceRecord> read_trace(std::istream& in);
void write_trace(const std::filesystem::path& path, std::span<const TraceRecord> trace);

// Triplets: CSV i,j,k.
void write_triplets(const std::filesystem::path& path, std::span<const Triplet> triplets);
std::vector<Triplet> read_triplets(const std::filesystem::path& path);

nlohmann::json to_json(const QueryConfig& c);
QueryConfig query_config_from_json(const nlohmann::json& j, const QueryConfig& defaults = {});
nlohmann::json to_json(const OptimConfig& c);
OptimConfig optim_config_from_json(const nlohmann::json& j, const OptimConfig& defaults = {});
nlohmann::json to_json(const MetricConfig& c);
MetricConfig metric_config_from_json(const nlohmann::json& j, const MetricConfig& defaults = {});
nlohmann::json to_json(const ShapeSpec& s);
ShapeSpec shape_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentSpec& s);
ExperimentSpec experiment_spec_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::filesystem::path& path);
// Pretty-printed with a trailing newline.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace bundlembed
