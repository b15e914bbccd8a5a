#pragma once

#include <optional>
#include <span>
#include <vector>

#include "bundlembed/core.hpp"

namespace bundlembed {

struct MetricConfig {
    double k_fraction = 0.1;
    std::optional<std::size_t> k_override;

    // K for a set of n items: k_override, else floor(k_fraction * n), at least 1.
    std::size_t resolve_k(std::size_t n_items) const;
    void validate() const;
};

// NDCG of point p over its K nearest neighbours. The neighbour order comes
// from `recovered`; relevance exp(-d/d_K) always uses `truth` distances, with
// d_K the truth distance to p's K-th truth neighbour. Ties in neighbour rank
// break by ascending item index. When d_K = 0, relevance is 1 for coincident
// items and 0 otherwise.
double ndcg_point(std::size_t p, const CoordTable& recovered, const CoordTable& truth, std::size_t k);

// Mean of ndcg_point over all points.
double ndcg_space(const CoordTable& recovered, const CoordTable& truth, std::size_t k);

struct NdcgResult {
    double mean = 0.0;
    std::vector<std::size_t> mapping;  // recovered space s -> truth aspect mapping[s]
    std::vector<double> per_space;     // ndcg of space s against mapping[s]
    std::size_t candidates = 0;        // bijections evaluated
};

// Best mean NDCG over all bijections between recovered spaces and truth aspects.
NdcgResult ndcg_multi(const MultiEmbedding& recovered, const GroundTruth& truth, const MetricConfig& cfg);

// Mean over rows of min/max of the two alpha entries. Needs exactly two
// columns unless `allow_top2` is set, in which case rows use their two
// largest entries (not part of the reference definition).
double affiliation_uncertainty(const AspectWeights& w, bool allow_top2 = false);

// Fraction of triplets for which no space has d(i,j) < d(i,k) strictly.
double generalization_error(std::span<const Triplet> triplets, const MultiEmbedding& emb);

struct AspectConfusion {
    // counts[a][b]: bundles answered under truth aspect a whose argmax alpha
    // space maps to truth aspect b.
    std::vector<std::vector<std::size_t>> counts;
    std::size_t matched = 0;
    std::size_t total = 0;
    double recovery_rate() const { return total ? static_cast<double>(matched) / static_cast<double>(total) : 0.0; }
};

// Bundles without a source_aspect are skipped. `weights` rows align with `bundles`.
AspectConfusion aspect_confusion(std::span<const Bundle> bundles, const AspectWeights& weights,
                                 std::span<const std::size_t> mapping, std::size_t n_aspects);

}  // namespace bundlembed
