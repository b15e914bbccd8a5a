#include "bundlembed/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "bundlembed/optimizer.hpp"

namespace bundlembed {

std::size_t MetricConfig::resolve_k(std::size_t n_items) const {
    validate();
    const std::size_t k = k_override ? *k_override
                                     : static_cast<std::size_t>(std::floor(k_fraction * static_cast<double>(n_items) + 1e-9));
    return std::max<std::size_t>(k, 1);
}

void MetricConfig::validate() const {
    if (!(k_fraction > 0.0 && k_fraction <= 1.0)) throw std::invalid_argument("MetricConfig: k_fraction outside (0, 1]");
    if (k_override && *k_override < 1) throw std::invalid_argument("MetricConfig: K must be >= 1");
}

namespace {

// The k nearest neighbours of p (excluding p) as (distance, index), ranked by
// distance then index.
std::vector<std::pair<double, std::size_t>> nearest(std::size_t p, const CoordTable& space, std::size_t k) {
    std::vector<std::pair<double, std::size_t>> all;
    all.reserve(space.rows() - 1);
    for (std::size_t i = 0; i < space.rows(); ++i)
        if (i != p) all.emplace_back(pair_distance(space.row(p), space.row(i)), i);
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end());
    all.resize(k);
    return all;
}

double dcg(std::size_t p, const std::vector<std::pair<double, std::size_t>>& ranked, const CoordTable& truth,
           double d_k) {
    double sum = 0.0;
    for (std::size_t r = 0; r < ranked.size(); ++r) {
        const double d = pair_distance(truth.row(p), truth.row(ranked[r].second));
        double rel;
        if (d_k > 0.0)
            rel = std::exp(-d / d_k);
        else
            rel = d == 0.0 ? 1.0 : 0.0;
        sum += (std::exp2(rel) - 1.0) / std::log2(static_cast<double>(r) + 2.0);
    }
    return sum;
}

}  // namespace

double ndcg_point(std::size_t p, const CoordTable& recovered, const CoordTable& truth, std::size_t k) {
    if (recovered.rows() != truth.rows()) throw std::invalid_argument("ndcg_point: tables differ in item count");
    if (k < 1 || k >= truth.rows()) throw std::invalid_argument("ndcg_point: need 1 <= K < n_items");
    if (p >= truth.rows()) throw std::out_of_range("ndcg_point: point index out of range");
    const auto ideal = nearest(p, truth, k);
    const double d_k = ideal.back().first;
    const double idcg = dcg(p, ideal, truth, d_k);
    const double got = dcg(p, nearest(p, recovered, k), truth, d_k);
    return idcg > 0.0 ? got / idcg : 1.0;
}

double ndcg_space(const CoordTable& recovered, const CoordTable& truth, std::size_t k) {
    double sum = 0.0;
    for (std::size_t p = 0; p < truth.rows(); ++p) sum += ndcg_point(p, recovered, truth, k);
    return sum / static_cast<double>(truth.rows());
}

NdcgResult ndcg_multi(const MultiEmbedding& recovered, const GroundTruth& truth, const MetricConfig& cfg) {
    if (recovered.n_spaces() != truth.n_aspects())
        throw std::invalid_argument("ndcg_multi: number of recovered spaces differs from truth aspects");
    if (recovered.n_items() != truth.n_items()) throw std::invalid_argument("ndcg_multi: item counts differ");
    const std::size_t n = recovered.n_spaces();
    const std::size_t k = cfg.resolve_k(truth.n_items());

    std::vector<double> score(n * n);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t a = 0; a < n; ++a) score[s * n + a] = ndcg_space(recovered.spaces[s], truth.aspects[a], k);

    NdcgResult best;
    best.mean = -1.0;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    do {
        ++best.candidates;
        double sum = 0.0;
        for (std::size_t s = 0; s < n; ++s) sum += score[s * n + perm[s]];
        const double mean = sum / static_cast<double>(n);
        if (mean > best.mean) {
            best.mean = mean;
            best.mapping = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    best.per_space.resize(n);
    for (std::size_t s = 0; s < n; ++s) best.per_space[s] = score[s * n + best.mapping[s]];
    return best;
}

double affiliation_uncertainty(const AspectWeights& w, bool allow_top2) {
    if (w.cols() != 2 && !(allow_top2 && w.cols() > 2))
        throw std::invalid_argument("affiliation_uncertainty: defined for exactly two spaces");
    if (w.rows() == 0) throw std::invalid_argument("affiliation_uncertainty: no rows");
    double sum = 0.0;
    std::vector<double> row(w.cols());
    for (std::size_t r = 0; r < w.rows(); ++r) {
        auto a = w.alpha_row(r);
        std::copy(a.begin(), a.end(), row.begin());
        std::partial_sort(row.begin(), row.begin() + 2, row.end(), std::greater<>());
        sum += row[1] / row[0];
    }
    return sum / static_cast<double>(w.rows());
}

double generalization_error(std::span<const Triplet> triplets, const MultiEmbedding& emb) {
    if (triplets.empty()) throw std::invalid_argument("generalization_error: no triplets");
    std::size_t unsatisfied = 0;
    for (const auto& t : triplets) {
        if (t.i == t.j || t.i == t.k || t.j == t.k)
            throw std::invalid_argument("generalization_error: degenerate triplet");
        if (std::max({t.i, t.j, t.k}) >= emb.n_items())
            throw std::out_of_range("generalization_error: triplet item out of range");
        bool ok = false;
        for (const auto& space : emb.spaces) {
            if (pair_distance(space.row(t.i), space.row(t.j)) < pair_distance(space.row(t.i), space.row(t.k))) {
                ok = true;
                break;
            }
        }
        if (!ok) ++unsatisfied;
    }
    return static_cast<double>(unsatisfied) / static_cast<double>(triplets.size());
}

AspectConfusion aspect_confusion(std::span<const Bundle> bundles, const AspectWeights& weights,
                                 std::span<const std::size_t> mapping, std::size_t n_aspects) {
    if (weights.rows() != bundles.size()) throw std::invalid_argument("aspect_confusion: one weight row per bundle");
    if (mapping.size() != weights.cols()) throw std::invalid_argument("aspect_confusion: mapping size mismatch");
    AspectConfusion c;
    c.counts.assign(n_aspects, std::vector<std::size_t>(n_aspects, 0));
    for (std::size_t q = 0; q < bundles.size(); ++q) {
        if (!bundles[q].source_aspect) continue;
        const auto src = static_cast<std::size_t>(*bundles[q].source_aspect);
        const std::size_t inferred = mapping[weights.argmax(q)];
        if (src >= n_aspects || inferred >= n_aspects) throw std::out_of_range("aspect_confusion: aspect out of range");
        ++c.counts[src][inferred];
        ++c.total;
        if (src == inferred) ++c.matched;
    }
    return c;
}

}  // namespace bundlembed
