#pragma once

// Naive reference implementations. Written from the formulas directly and
// kept free of any library helper they are meant to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "bundlembed/core.hpp"

namespace oracle {

using bundlembed::Bundle;
using bundlembed::CoordTable;
using bundlembed::ItemIndex;
using bundlembed::MultiEmbedding;
using bundlembed::Triplet;
using bundlembed::Tuple;

inline double dist(const CoordTable& t, std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t k = 0; k < t.dim(); ++k) s += (t(a, k) - t(b, k)) * (t(a, k) - t(b, k));
    return std::sqrt(s);
}

inline double contrastive(double d, int theta, double m) {
    const double hinge = m - d > 0.0 ? m - d : 0.0;
    return theta == 1 ? d * d : hinge * hinge;
}

inline std::vector<double> softmax_row(const std::vector<double>& beta) {
    double mx = beta[0];
    for (double b : beta) mx = std::max(mx, b);
    std::vector<double> out(beta.size());
    double z = 0.0;
    for (std::size_t s = 0; s < beta.size(); ++s) z += out[s] = std::exp(beta[s] - mx);
    for (double& v : out) v /= z;
    return out;
}

// sum_q sum_s alpha[q][s] * sum_{t in T^q} loss(t, E_s)
inline double objective_bundled(const std::vector<Bundle>& bundles, const MultiEmbedding& emb,
                                const std::vector<std::vector<double>>& alpha, double m) {
    double total = 0.0;
    for (std::size_t q = 0; q < bundles.size(); ++q)
        for (std::size_t s = 0; s < emb.spaces.size(); ++s) {
            double l = 0.0;
            for (const auto& t : bundles[q].tuples) l += contrastive(dist(emb.spaces[s], t.i, t.j), t.theta, m);
            total += alpha[q][s] * l;
        }
    return total;
}

// sum_t sum_s alpha[t][s] * loss(t, E_s)
inline double objective_nonbundled(const std::vector<Tuple>& tuples, const MultiEmbedding& emb,
                                   const std::vector<std::vector<double>>& alpha, double m) {
    double total = 0.0;
    for (std::size_t r = 0; r < tuples.size(); ++r)
        for (std::size_t s = 0; s < emb.spaces.size(); ++s)
            total += alpha[r][s] * contrastive(dist(emb.spaces[s], tuples[r].i, tuples[r].j), tuples[r].theta, m);
    return total;
}

// Full sort of every other item by (distance, index), then first k.
inline std::vector<std::size_t> knn(const CoordTable& t, std::size_t p, std::size_t k) {
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < t.rows(); ++j)
        if (j != p) others.push_back(j);
    std::stable_sort(others.begin(), others.end(),
                     [&](std::size_t a, std::size_t b) { return dist(t, p, a) < dist(t, p, b); });
    others.resize(k);
    return others;
}

inline double ndcg_point(std::size_t p, const CoordTable& rec, const CoordTable& truth, std::size_t k) {
    const auto ideal = knn(truth, p, k);
    const double dk = dist(truth, p, ideal.back());
    auto gain = [&](const std::vector<std::size_t>& order) {
        double g = 0.0;
        for (std::size_t i = 0; i < order.size(); ++i) {
            const double d = dist(truth, p, order[i]);
            const double rel = dk > 0.0 ? std::exp(-d / dk) : (d == 0.0 ? 1.0 : 0.0);
            g += (std::pow(2.0, rel) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
        }
        return g;
    };
    const double idcg = gain(ideal);
    return idcg > 0.0 ? gain(knn(rec, p, k)) / idcg : 1.0;
}

inline double ndcg_space(const CoordTable& rec, const CoordTable& truth, std::size_t k) {
    double s = 0.0;
    for (std::size_t p = 0; p < truth.rows(); ++p) s += oracle::ndcg_point(p, rec, truth, k);
    return s / static_cast<double>(truth.rows());
}

// Recursive enumeration of every bijection; returns the best mean.
inline double ndcg_best_mapping(const MultiEmbedding& rec, const std::vector<CoordTable>& truth, std::size_t k,
                                std::vector<std::size_t>* best_mapping = nullptr) {
    const std::size_t n = truth.size();
    std::vector<std::size_t> current;
    std::vector<bool> used(n, false);
    double best = -1.0;
    std::function<void(double)> go = [&](double acc) {
        if (current.size() == n) {
            if (acc / static_cast<double>(n) > best) {
                best = acc / static_cast<double>(n);
                if (best_mapping) *best_mapping = current;
            }
            return;
        }
        const std::size_t s = current.size();
        for (std::size_t a = 0; a < n; ++a) {
            if (used[a]) continue;
            used[a] = true;
            current.push_back(a);
            go(acc + oracle::ndcg_space(rec.spaces[s], truth[a], k));
            current.pop_back();
            used[a] = false;
        }
    };
    go(0.0);
    return best;
}

inline double generalization_error(const std::vector<Triplet>& triplets, const MultiEmbedding& emb) {
    std::size_t bad = 0;
    for (const auto& t : triplets) {
        bool satisfied = false;
        for (const auto& sp : emb.spaces) satisfied = satisfied || dist(sp, t.i, t.j) < dist(sp, t.i, t.k);
        bad += satisfied ? 0 : 1;
    }
    return static_cast<double>(bad) / static_cast<double>(triplets.size());
}

inline double wcss(const CoordTable& pts, const std::vector<int>& labels, int k) {
    double total = 0.0;
    for (int c = 0; c < k; ++c) {
        std::vector<double> mean(pts.dim(), 0.0);
        std::size_t n = 0;
        for (std::size_t i = 0; i < pts.rows(); ++i)
            if (labels[i] == c) {
                ++n;
                for (std::size_t d = 0; d < pts.dim(); ++d) mean[d] += pts(i, d);
            }
        if (n == 0) continue;
        for (double& v : mean) v /= static_cast<double>(n);
        for (std::size_t i = 0; i < pts.rows(); ++i)
            if (labels[i] == c)
                for (std::size_t d = 0; d < pts.dim(); ++d) total += (pts(i, d) - mean[d]) * (pts(i, d) - mean[d]);
    }
    return total;
}

// Minimum within-cluster sum of squares over every labelling into at most k
// clusters. Exponential; keep n small.
inline double kmeans_optimum(const CoordTable& pts, int k) {
    const std::size_t n = pts.rows();
    std::vector<int> labels(n, 0);
    double best = INFINITY;
    while (true) {
        best = std::min(best, wcss(pts, labels, k));
        std::size_t i = 0;
        while (i < n && ++labels[i] == k) labels[i++] = 0;
        if (i == n) break;
    }
    return best;
}

// Central differences of f around x, one coordinate at a time.
inline std::vector<double> central_differences(const std::function<double(const std::vector<double>&)>& f,
                                               std::vector<double> x, double h) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double up = f(x);
        x[i] = orig - h;
        const double down = f(x);
        x[i] = orig;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

// Objective over rows of tuples in extended precision. x packs coordinates
// (space, item, dim) followed by beta (row, space).
inline long double objective_packed_ld(const std::vector<std::vector<Tuple>>& rows, std::size_t spaces,
                                       std::size_t n_items, std::size_t dim, const std::vector<long double>& x,
                                       long double m) {
    const std::size_t nb = spaces * n_items * dim;
    long double total = 0.0L;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        long double mx = x[nb + r * spaces];
        for (std::size_t s = 1; s < spaces; ++s) mx = std::max(mx, x[nb + r * spaces + s]);
        long double z = 0.0L;
        for (std::size_t s = 0; s < spaces; ++s) z += std::exp(x[nb + r * spaces + s] - mx);
        for (std::size_t s = 0; s < spaces; ++s) {
            long double l = 0.0L;
            for (const auto& t : rows[r]) {
                long double d2 = 0.0L;
                for (std::size_t c = 0; c < dim; ++c) {
                    const long double diff = x[(s * n_items + t.i) * dim + c] - x[(s * n_items + t.j) * dim + c];
                    d2 += diff * diff;
                }
                const long double d = std::sqrt(d2);
                l += t.theta ? d2 : std::pow(std::max(0.0L, m - d), 2);
            }
            total += std::exp(x[nb + r * spaces + s] - mx) / z * l;
        }
    }
    return total;
}

inline std::vector<double> central_differences_ld(const std::function<long double(const std::vector<long double>&)>& f,
                                                  std::vector<long double> x, long double h) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const long double orig = x[i];
        x[i] = orig + h;
        const long double up = f(x);
        x[i] = orig - h;
        const long double down = f(x);
        x[i] = orig;
        g[i] = static_cast<double>((up - down) / (2.0L * h));
    }
    return g;
}

inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
    std::uint64_t r = 1;
    for (std::uint64_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

}  // namespace oracle
