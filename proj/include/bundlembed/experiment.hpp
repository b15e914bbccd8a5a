#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "bundlembed/core.hpp"
#include "bundlembed/metrics.hpp"
#include "bundlembed/optimizer.hpp"
#include "bundlembed/synthgen.hpp"

namespace bundlembed {

// Everything needed to rerun a synthetic experiment end to end.
struct ExperimentSpec {
    std::vector<ShapeSpec> shapes;
    std::optional<std::filesystem::path> ground_truth_file;  // overrides shapes
    std::uint64_t ground_truth_seed = 0;
    QueryConfig query;
    std::uint64_t answer_seed = 0;
    OptimConfig optim;
    Mode mode = Mode::bundled;
    std::optional<NoiseSpec> noise;
    MetricConfig metric;
    std::filesystem::path output_dir = ".";

    // Fills every component seed from one master seed.
    void seed_all(std::uint64_t master);
};

// 214-point A/O/Butterfly set; A and Butterfly indexed along the stroke, O randomly.
std::vector<ShapeSpec> aob_shapes(std::size_t n_points = 214);
// The A and O aspects of aob_shapes.
std::vector<ShapeSpec> ao_shapes(std::size_t n_points = 214);

// `count` uniformly random queries of qc.query_size items.
std::vector<std::vector<ItemIndex>> random_queries(std::size_t n_items, std::size_t count, std::size_t query_size,
                                                   std::uint64_t seed);

// Simulated crowd answers for n_queries per aspect. Random strategy draws all
// queries up front; local strategy splits them over qc.phases, re-optimizing
// (bundled mode, `optim`) after each phase and sampling the next phase's
// queries around anchors in the recovered spaces.
std::vector<Bundle> collect_bundles(const GroundTruth& gt, const QueryConfig& qc, std::uint64_t answer_seed,
                                    const OptimConfig& optim);

struct RunSummary {
    OptimResult result;
    std::optional<NdcgResult> ndcg;
    std::optional<double> uncertainty;
};

// Optimizes and evaluates against `truth` when given. When ndcg_every > 0 the
// trace carries NDCG every ndcg_every iterations (and always at the last one).
// Uncertainty is traced every iteration when there are exactly two spaces.
RunSummary run_optimization(std::span<const Bundle> bundles, std::size_t n_items, const OptimConfig& cfg, Mode mode,
                            const GroundTruth* truth, const MetricConfig& metric, std::size_t ndcg_every = 0);

struct ExperimentOutcome {
    GroundTruth truth;
    std::vector<Bundle> bundles;
    RunSummary run;
};

// Ground truth, simulated answers, optional noise, optimization, evaluation.
ExperimentOutcome run_experiment(const ExperimentSpec& spec, std::size_t ndcg_every = 0);

}  // namespace bundlembed
