#include "bundlembed/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "bundlembed/rng.hpp"
#include "bundlembed/sampler.hpp"
#include "embedded_skeletons.hpp"

namespace bundlembed {

namespace {

const std::map<std::string, Shape>& shape_names() {
    static const std::map<std::string, Shape> names = {
        {"letter_A", Shape::letter_A},   {"letter_O", Shape::letter_O},
        {"butterfly", Shape::butterfly}, {"gaussian_blobs", Shape::gaussian_blobs},
        {"ring", Shape::ring},           {"grid_3d", Shape::grid_3d},
        {"helix_3d", Shape::helix_3d},   {"custom", Shape::custom},
    };
    return names;
}

constexpr double kSkeletonJitter = 0.01;

// Points spread uniformly at random along the concatenated arc length of all
// polylines, returned in arc-length order.
std::vector<std::vector<double>> sample_skeleton(const Skeleton& skel, std::size_t n, Rng& rng) {
    struct Segment {
        const std::vector<double>* a;
        const std::vector<double>* b;
        double start;
        double length;
    };
    std::vector<Segment> segs;
    double total = 0.0;
    for (const auto& poly : skel) {
        for (std::size_t v = 0; v + 1 < poly.size(); ++v) {
            double len2 = 0.0;
            for (std::size_t k = 0; k < poly[v].size(); ++k) {
                const double d = poly[v + 1][k] - poly[v][k];
                len2 += d * d;
            }
            const double len = std::sqrt(len2);
            if (len == 0.0) continue;
            segs.push_back({&poly[v], &poly[v + 1], total, len});
            total += len;
        }
    }
    if (segs.empty()) throw std::invalid_argument("skeleton has zero length");

    std::vector<double> positions(n);
    for (auto& p : positions) p = rng.uniform() * total;
    std::sort(positions.begin(), positions.end());

    const std::size_t dim = segs.front().a->size();
    std::vector<std::vector<double>> out;
    out.reserve(n);
    std::size_t seg = 0;
    for (double pos : positions) {
        while (seg + 1 < segs.size() && pos >= segs[seg].start + segs[seg].length) ++seg;
        const auto& s = segs[seg];
        const double t = std::clamp((pos - s.start) / s.length, 0.0, 1.0);
        std::vector<double> pt(dim);
        for (std::size_t k = 0; k < dim; ++k)
            pt[k] = (*s.a)[k] + t * ((*s.b)[k] - (*s.a)[k]) + kSkeletonJitter * rng.normal();
        out.push_back(std::move(pt));
    }
    return out;
}

std::vector<std::vector<double>> sample_blobs(std::size_t n, Rng& rng) {
    constexpr std::size_t kBlobs = 5;
    std::vector<std::vector<double>> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t blob = i * kBlobs / n;
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(blob) / kBlobs;
        out.push_back({0.7 * std::cos(angle) + 0.1 * rng.normal(), 0.7 * std::sin(angle) + 0.1 * rng.normal()});
    }
    return out;
}

std::vector<std::vector<double>> sample_ring(std::size_t n, Rng& rng) {
    std::vector<double> angles(n);
    for (auto& a : angles) a = rng.uniform() * 2.0 * std::numbers::pi;
    std::sort(angles.begin(), angles.end());
    std::vector<std::vector<double>> out;
    out.reserve(n);
    for (double a : angles) {
        const double r = 1.0 + 0.03 * rng.normal();
        out.push_back({r * std::cos(a), r * std::sin(a)});
    }
    return out;
}

// Lattice points in raster order on the smallest cube holding n points.
std::vector<std::vector<double>> sample_grid3d(std::size_t n, Rng& rng) {
    std::size_t side = 1;
    while (side * side * side < n) ++side;
    const double step = side > 1 ? 1.0 / static_cast<double>(side - 1) : 0.0;
    std::vector<std::vector<double>> out;
    out.reserve(n);
    for (std::size_t idx = 0; idx < n; ++idx) {
        const std::size_t x = idx % side, y = (idx / side) % side, z = idx / (side * side);
        out.push_back({x * step + 0.05 * step * rng.normal(), y * step + 0.05 * step * rng.normal(),
                       z * step + 0.05 * step * rng.normal()});
    }
    return out;
}

std::vector<std::vector<double>> sample_helix(std::size_t n, Rng& rng) {
    constexpr double kTurns = 3.0;
    std::vector<double> ts(n);
    for (auto& t : ts) t = rng.uniform();
    std::sort(ts.begin(), ts.end());
    std::vector<std::vector<double>> out;
    out.reserve(n);
    for (double t : ts) {
        const double a = 2.0 * std::numbers::pi * kTurns * t;
        out.push_back({std::cos(a) + 0.02 * rng.normal(), std::sin(a) + 0.02 * rng.normal(),
                       2.0 * t - 1.0 + 0.02 * rng.normal()});
    }
    return out;
}

// Maps the bounding box center to the origin and the largest half-extent to 1.
CoordTable normalize_to_box(const std::vector<std::vector<double>>& pts) {
    const std::size_t n = pts.size();
    const std::size_t dim = pts.front().size();
    std::vector<double> lo(dim, std::numeric_limits<double>::infinity());
    std::vector<double> hi(dim, -std::numeric_limits<double>::infinity());
    for (const auto& p : pts) {
        if (p.size() != dim) throw std::invalid_argument("skeleton vertices differ in dimension");
        for (std::size_t k = 0; k < dim; ++k) {
            lo[k] = std::min(lo[k], p[k]);
            hi[k] = std::max(hi[k], p[k]);
        }
    }
    double half = 0.0;
    for (std::size_t k = 0; k < dim; ++k) half = std::max(half, 0.5 * (hi[k] - lo[k]));
    if (half == 0.0) half = 1.0;
    CoordTable t(n, dim);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < dim; ++k)
            t(i, k) = std::clamp((pts[i][k] - 0.5 * (lo[k] + hi[k])) / half, -1.0, 1.0);
    return t;
}

CoordTable generate_one(const ShapeSpec& spec, Rng& rng) {
    std::vector<std::vector<double>> pts;
    switch (spec.shape) {
        case Shape::letter_A:
        case Shape::letter_O:
        case Shape::butterfly:
            pts = sample_skeleton(builtin_skeleton(spec.shape), spec.n_points, rng);
            break;
        case Shape::custom:
            if (!spec.skeleton_path) throw std::invalid_argument("custom shape needs a skeleton file");
            pts = sample_skeleton(load_skeleton(*spec.skeleton_path), spec.n_points, rng);
            break;
        case Shape::gaussian_blobs: pts = sample_blobs(spec.n_points, rng); break;
        case Shape::ring: pts = sample_ring(spec.n_points, rng); break;
        case Shape::grid_3d: pts = sample_grid3d(spec.n_points, rng); break;
        case Shape::helix_3d: pts = sample_helix(spec.n_points, rng); break;
    }
    CoordTable table = normalize_to_box(pts);
    if (spec.index_order == IndexOrder::random) {
        std::vector<std::size_t> perm(table.rows());
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        CoordTable shuffled(table.rows(), table.dim());
        for (std::size_t i = 0; i < perm.size(); ++i)
            std::copy_n(table.row(perm[i]).begin(), table.dim(), shuffled.row(i).begin());
        table = std::move(shuffled);
    }
    return table;
}

}  // namespace

std::string to_string(Shape s) {
    for (const auto& [name, v] : shape_names())
        if (v == s) return name;
    return "unknown";
}

Shape parse_shape(const std::string& s) {
    auto it = shape_names().find(s);
    if (it == shape_names().end()) throw std::invalid_argument("unknown shape: " + s);
    return it->second;
}

std::string to_string(IndexOrder o) { return o == IndexOrder::sequential ? "sequential" : "random"; }

IndexOrder parse_index_order(const std::string& s) {
    if (s == "sequential") return IndexOrder::sequential;
    if (s == "random") return IndexOrder::random;
    throw std::invalid_argument("unknown index order: " + s);
}

std::size_t shape_dim(Shape s) {
    switch (s) {
        case Shape::grid_3d:
        case Shape::helix_3d: return 3;
        case Shape::custom: return 0;  // decided by the file
        default: return 2;
    }
}

Skeleton parse_skeleton(const std::string& text) {
    Skeleton skel;
    Polyline current;
    std::istringstream in(text);
    std::string line;
    auto flush = [&] {
        if (current.size() == 1) throw std::invalid_argument("skeleton polyline with a single vertex");
        if (!current.empty()) skel.push_back(std::move(current));
        current.clear();
    };
    while (std::getline(in, line)) {
        if (!line.empty() && line.front() == '#') continue;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            flush();
            continue;
        }
        std::istringstream fields(line);
        std::vector<double> v;
        double x;
        while (fields >> x) v.push_back(x);
        if (!fields.eof() || (v.size() != 2 && v.size() != 3))
            throw std::invalid_argument("bad skeleton vertex line: " + line);
        if (!current.empty() && current.front().size() != v.size())
            throw std::invalid_argument("skeleton mixes 2D and 3D vertices");
        current.push_back(std::move(v));
    }
    flush();
    if (skel.empty()) throw std::invalid_argument("empty skeleton");
    for (const auto& p : skel)
        if (p.front().size() != skel.front().front().size())
            throw std::invalid_argument("skeleton mixes 2D and 3D polylines");
    return skel;
}

Skeleton load_skeleton(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open skeleton file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_skeleton(ss.str());
}

const Skeleton& builtin_skeleton(Shape s) {
    static const Skeleton a = parse_skeleton(skeletons::letter_A);
    static const Skeleton o = parse_skeleton(skeletons::letter_O);
    static const Skeleton b = parse_skeleton(skeletons::butterfly);
    switch (s) {
        case Shape::letter_A: return a;
        case Shape::letter_O: return o;
        case Shape::butterfly: return b;
        default: throw std::invalid_argument("no built-in skeleton for shape " + to_string(s));
    }
}

GroundTruth generate_ground_truth(std::span<const ShapeSpec> specs, std::uint64_t seed) {
    if (specs.empty()) throw std::invalid_argument("generate_ground_truth: no shapes");
    GroundTruth gt;
    for (std::size_t a = 0; a < specs.size(); ++a) {
        const auto& spec = specs[a];
        if (spec.n_points < 2) throw std::invalid_argument("generate_ground_truth: n_points < 2");
        if (spec.n_points != specs.front().n_points)
            throw std::invalid_argument("generate_ground_truth: shapes differ in n_points");
        Rng rng(derive_seed(seed, a));
        gt.aspects.push_back(generate_one(spec, rng));
        gt.aspect_names.push_back(to_string(spec.shape));
    }
    gt.validate();
    return gt;
}

std::vector<std::size_t> kmeanspp_seeds(const CoordTable& coords, std::size_t k, std::uint64_t seed) {
    const std::size_t n = coords.rows();
    if (n == 0) throw std::invalid_argument("kmeans: empty input");
    if (k == 0) throw std::invalid_argument("kmeans: k must be >= 1");
    Rng rng(seed);
    std::vector<std::size_t> centers{static_cast<std::size_t>(rng.uniform_index(n))};
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    while (centers.size() < std::min(k, n)) {
        const auto c = coords.row(centers.back());
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < coords.dim(); ++j) {
                const double d = coords(i, j) - c[j];
                s += d * d;
            }
            d2[i] = std::min(d2[i], s);
        }
        const std::size_t next = rng.weighted_index(d2);
        if (next == n) break;  // every point sits on a center
        centers.push_back(next);
    }
    return centers;
}

KMeansResult kmeans_answer(const CoordTable& coords, std::size_t bin_count, std::uint64_t seed,
                           std::size_t max_iterations) {
    const std::size_t n = coords.rows();
    const std::size_t dim = coords.dim();
    if (n == 0) throw std::invalid_argument("kmeans: empty input");
    if (bin_count < 1 || bin_count > n) throw std::invalid_argument("kmeans: need 1 <= bin_count <= rows");
    if (!coords.all_finite()) throw std::invalid_argument("kmeans: non-finite coordinates");

    const auto seeds = kmeanspp_seeds(coords, bin_count, seed);
    const std::size_t k = seeds.size();
    CoordTable centers(k, dim);
    for (std::size_t c = 0; c < k; ++c) std::copy_n(coords.row(seeds[c]).begin(), dim, centers.row(c).begin());

    KMeansResult res;
    std::vector<int> labels(n, -1);
    std::vector<std::size_t> counts(k);
    for (std::size_t it = 0; it < max_iterations; ++it) {
        bool changed = false;
        double wcss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                double s = 0.0;
                for (std::size_t j = 0; j < dim; ++j) {
                    const double d = coords(i, j) - centers(c, j);
                    s += d * d;
                }
                if (s < best_d) {
                    best_d = s;
                    best = static_cast<int>(c);
                }
            }
            if (labels[i] != best) changed = true;
            labels[i] = best;
            wcss += best_d;
        }
        res.wcss.push_back(wcss);
        res.iterations = it + 1;
        if (!changed) break;

        std::fill(counts.begin(), counts.end(), 0);
        CoordTable sums(k, dim);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[labels[i]];
            for (std::size_t j = 0; j < dim; ++j) sums(labels[i], j) += coords(i, j);
        }
        for (std::size_t c = 0; c < k; ++c)
            if (counts[c] > 0)
                for (std::size_t j = 0; j < dim; ++j) centers(c, j) = sums(c, j) / static_cast<double>(counts[c]);
    }

    // Relabel by first occurrence so labels are dense and deterministic.
    std::vector<int> remap(k, -1);
    int next = 0;
    res.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (remap[labels[i]] < 0) remap[labels[i]] = next++;
        res.labels[i] = remap[labels[i]];
    }
    res.clusters.assign(static_cast<std::size_t>(next), {});
    for (std::size_t i = 0; i < n; ++i) res.clusters[res.labels[i]].push_back(static_cast<ItemIndex>(i));
    return res;
}

CoordTable gather_rows(const CoordTable& table, std::span<const ItemIndex> items) {
    CoordTable out(items.size(), table.dim());
    for (std::size_t r = 0; r < items.size(); ++r) {
        if (items[r] >= table.rows()) throw std::out_of_range("gather_rows: item index out of range");
        std::copy_n(table.row(items[r]).begin(), table.dim(), out.row(r).begin());
    }
    return out;
}

std::vector<Bundle> simulate_answers(const GroundTruth& gt, const std::vector<std::vector<ItemIndex>>& queries,
                                     const QueryConfig& qc, std::uint64_t seed, QueryId first_query_id, int phase) {
    gt.validate();
    const std::size_t n_aspects = gt.n_aspects();

    std::vector<std::size_t> aspect_of(queries.size());
    if (qc.aspect_assignment == AspectAssignment::balanced) {
        for (std::size_t q = 0; q < queries.size(); ++q) aspect_of[q] = q % n_aspects;
        Rng rng(derive_seed(seed, "aspect-assignment"));
        rng.shuffle(aspect_of);
    } else {
        for (std::size_t q = 0; q < queries.size(); ++q) {
            Rng rng(derive_seed(derive_seed(seed, "aspect-choice"), q));
            aspect_of[q] = rng.uniform_index(n_aspects);
        }
    }

    std::vector<Bundle> out;
    out.reserve(queries.size());
    for (std::size_t q = 0; q < queries.size(); ++q) {
        const auto& items = queries[q];
        for (ItemIndex v : items)
            if (v >= gt.n_items()) throw std::out_of_range("simulate_answers: item index out of range");
        const std::size_t aspect = aspect_of[q];
        const CoordTable local = gather_rows(gt.aspects[aspect], items);
        const std::size_t bins = std::min(qc.bin_count, items.size());
        const auto km = kmeans_answer(local, bins, derive_seed(seed, first_query_id + q));
        Partition clusters;
        for (const auto& c : km.clusters) {
            std::vector<ItemIndex> members;
            for (ItemIndex pos : c) members.push_back(items[pos]);
            clusters.push_back(std::move(members));
        }
        out.push_back(make_bundle(first_query_id + q, items, std::move(clusters), static_cast<int>(aspect), phase));
    }
    return out;
}

std::vector<Bundle> inject_noise(std::vector<Bundle> bundles, const NoiseSpec& noise) {
    if (!(noise.level >= 0.0 && noise.level <= 1.0)) throw std::invalid_argument("inject_noise: level outside [0, 1]");
    std::vector<std::pair<std::size_t, std::size_t>> index;  // (bundle, tuple)
    for (std::size_t b = 0; b < bundles.size(); ++b)
        for (std::size_t t = 0; t < bundles[b].tuples.size(); ++t) index.emplace_back(b, t);
    const auto count = static_cast<std::size_t>(std::llround(noise.level * static_cast<double>(index.size())));
    Rng rng(noise.seed);
    for (std::size_t pick : rng.sample_without_replacement(index.size(), count)) {
        auto& tup = bundles[index[pick].first].tuples[index[pick].second];
        tup.theta = static_cast<std::uint8_t>(1 - tup.theta);
    }
    return bundles;
}

std::vector<Triplet> sample_triplets(const GroundTruth& gt, std::size_t count, std::uint64_t seed) {
    gt.validate();
    const std::size_t n = gt.n_items();
    if (n < 3) throw std::invalid_argument("sample_triplets: need at least 3 items");
    Rng rng(seed);
    std::vector<Triplet> out;
    out.reserve(count);
    std::size_t attempts = 0;
    while (out.size() < count) {
        if (++attempts > 100 * count + 1000) throw std::runtime_error("sample_triplets: too many distance ties");
        const auto& space = gt.aspects[rng.uniform_index(gt.n_aspects())];
        auto pick = rng.sample_without_replacement(n, 3);
        const auto i = static_cast<ItemIndex>(pick[0]);
        auto j = static_cast<ItemIndex>(pick[1]);
        auto k = static_cast<ItemIndex>(pick[2]);
        double dij = 0.0, dik = 0.0;
        for (std::size_t d = 0; d < space.dim(); ++d) {
            dij += (space(i, d) - space(j, d)) * (space(i, d) - space(j, d));
            dik += (space(i, d) - space(k, d)) * (space(i, d) - space(k, d));
        }
        if (dij == dik) continue;
        if (dij > dik) std::swap(j, k);
        out.push_back({i, j, k});
    }
    return out;
}

}  // namespace bundlembed
