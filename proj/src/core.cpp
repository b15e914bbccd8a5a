#include "bundlembed/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

namespace bundlembed {

CoordTable::CoordTable(std::size_t rows, std::size_t dim, std::vector<double> data)
    : rows_(rows), dim_(dim), data_(std::move(data)) {
    if (data_.size() != rows_ * dim_)
        throw std::invalid_argument("CoordTable: data size does not match rows x dim");
}

bool CoordTable::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

ItemSet ItemSet::with_count(std::size_t n) {
    ItemSet s;
    s.n_items = n;
    s.validate();
    return s;
}

void ItemSet::validate() const {
    if (n_items < 2) throw std::invalid_argument("ItemSet: need at least 2 items");
    if (!labels.empty() && labels.size() != n_items)
        throw std::invalid_argument("ItemSet: label count does not match n_items");
    if (!image_refs.empty() && image_refs.size() != n_items)
        throw std::invalid_argument("ItemSet: image_refs count does not match n_items");
}

void GroundTruth::validate() const {
    if (aspects.empty()) throw std::invalid_argument("GroundTruth: no aspects");
    for (const auto& a : aspects) {
        if (a.rows() != n_items() || a.dim() != dim())
            throw std::invalid_argument("GroundTruth: aspect tables differ in shape");
        if (!a.all_finite()) throw std::invalid_argument("GroundTruth: non-finite coordinate");
    }
    if (n_items() < 2) throw std::invalid_argument("GroundTruth: need at least 2 items");
    if (dim() == 0) throw std::invalid_argument("GroundTruth: zero dimension");
    if (!aspect_names.empty() && aspect_names.size() != aspects.size())
        throw std::invalid_argument("GroundTruth: aspect_names count mismatch");
}

bool is_partition_of(std::span<const ItemIndex> items, const Partition& clusters) {
    std::set<ItemIndex> expected(items.begin(), items.end());
    if (expected.size() != items.size()) return false;
    std::set<ItemIndex> seen;
    for (const auto& c : clusters) {
        if (c.empty()) return false;
        for (ItemIndex v : c) {
            if (!expected.count(v) || !seen.insert(v).second) return false;
        }
    }
    return seen.size() == expected.size();
}

void validate_bundle(const Bundle& b) {
    std::unordered_set<ItemIndex> members(b.items.begin(), b.items.end());
    if (members.size() != b.items.size())
        throw std::invalid_argument("Bundle: duplicate items");
    for (const auto& t : b.tuples) {
        if (t.i == t.j) throw std::invalid_argument("Bundle: tuple with i == j");
        if (t.theta > 1) throw std::invalid_argument("Bundle: theta not binary");
        if (!members.count(t.i) || !members.count(t.j))
            throw std::invalid_argument("Bundle: tuple references item outside the query");
    }
    if (!b.clusters.empty()) {
        if (!is_partition_of(b.items, b.clusters))
            throw std::invalid_argument("Bundle: clusters do not partition items");
        const std::size_t n = b.items.size();
        if (b.tuples.size() != n * (n - 1) / 2)
            throw std::invalid_argument("Bundle: tuple count is not C(N,2)");
    }
}

std::size_t total_tuples(std::span<const Bundle> bundles) {
    std::size_t n = 0;
    for (const auto& b : bundles) n += b.tuples.size();
    return n;
}

void MultiEmbedding::validate() const {
    if (spaces.empty()) throw std::invalid_argument("MultiEmbedding: no spaces");
    for (const auto& s : spaces) {
        if (s.rows() != n_items() || s.dim() != dim())
            throw std::invalid_argument("MultiEmbedding: spaces differ in shape");
        if (!s.all_finite()) throw std::invalid_argument("MultiEmbedding: non-finite coordinate");
    }
}

void softmax(std::span<const double> in, std::span<double> out) {
    double mx = -INFINITY;
    for (double v : in) mx = std::max(mx, v);
    double sum = 0.0;
    for (std::size_t s = 0; s < in.size(); ++s) {
        out[s] = std::exp(in[s] - mx);
        sum += out[s];
    }
    for (std::size_t s = 0; s < in.size(); ++s) out[s] /= sum;
}

AspectWeights AspectWeights::uniform(std::size_t rows, std::size_t cols) {
    return from_beta(rows, cols, std::vector<double>(rows * cols, 0.0));
}

AspectWeights AspectWeights::from_beta(std::size_t rows, std::size_t cols, std::vector<double> beta) {
    if (cols == 0) throw std::invalid_argument("AspectWeights: zero columns");
    if (beta.size() != rows * cols) throw std::invalid_argument("AspectWeights: beta size mismatch");
    for (double v : beta)
        if (!std::isfinite(v)) throw std::invalid_argument("AspectWeights: non-finite beta");
    AspectWeights w;
    w.rows_ = rows;
    w.cols_ = cols;
    w.beta_ = std::move(beta);
    w.alpha_.resize(w.beta_.size());
    for (std::size_t r = 0; r < rows; ++r) {
        softmax(std::span<const double>(w.beta_.data() + r * cols, cols),
                std::span<double>(w.alpha_.data() + r * cols, cols));
    }
    return w;
}

std::size_t AspectWeights::argmax(std::size_t r) const {
    auto row = alpha_row(r);
    return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

void OptimConfig::validate() const {
    if (n_embeddings < 1) throw std::invalid_argument("OptimConfig: n_embeddings must be >= 1");
    if (dim < 1) throw std::invalid_argument("OptimConfig: dim must be >= 1");
    if (!(margin > 0.0)) throw std::invalid_argument("OptimConfig: margin must be > 0");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("OptimConfig: learning_rate must be > 0");
    if (!(init_scale > 0.0)) throw std::invalid_argument("OptimConfig: init_scale must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw std::invalid_argument("OptimConfig: Adam decay rates must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("OptimConfig: epsilon must be > 0");
}

void QueryConfig::validate(std::size_t n_items) const {
    if (bin_count < 2) throw std::invalid_argument("QueryConfig: bin_count must be >= 2");
    if (query_size < bin_count) throw std::invalid_argument("QueryConfig: query_size < bin_count");
    if (query_size > n_items) throw std::invalid_argument("QueryConfig: query_size > n_items");
    if (phases < 1) throw std::invalid_argument("QueryConfig: phases must be >= 1");
    if (neighborhood_factor < 1) throw std::invalid_argument("QueryConfig: neighborhood_factor must be >= 1");
}

std::string to_string(Mode m) { return m == Mode::bundled ? "bundled" : "nonbundled"; }

Mode parse_mode(const std::string& s) {
    if (s == "bundled") return Mode::bundled;
    if (s == "nonbundled") return Mode::nonbundled;
    throw std::invalid_argument("unknown mode: " + s);
}

std::string to_string(SamplingStrategy s) { return s == SamplingStrategy::random ? "random" : "local"; }

SamplingStrategy parse_strategy(const std::string& s) {
    if (s == "random") return SamplingStrategy::random;
    if (s == "local") return SamplingStrategy::local;
    throw std::invalid_argument("unknown sampling strategy: " + s);
}

std::string to_string(AspectAssignment a) { return a == AspectAssignment::balanced ? "balanced" : "uniform"; }

AspectAssignment parse_assignment(const std::string& s) {
    if (s == "balanced") return AspectAssignment::balanced;
    if (s == "uniform") return AspectAssignment::uniform;
    throw std::invalid_argument("unknown aspect assignment: " + s);
}

}  // namespace bundlembed
