#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bundlembed {

using ItemIndex = std::uint32_t;
using QueryId = std::uint64_t;

// Dense row-major n_items x dim table of coordinates.
class CoordTable {
public:
    CoordTable() = default;
    CoordTable(std::size_t rows, std::size_t dim, double fill = 0.0)
        : rows_(rows), dim_(dim), data_(rows * dim, fill) {}
    CoordTable(std::size_t rows, std::size_t dim, std::vector<double> data);

    std::size_t rows() const { return rows_; }
    std::size_t dim() const { return dim_; }
    bool empty() const { return rows_ == 0; }

    std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
    std::span<double> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }

    double operator()(std::size_t i, std::size_t k) const { return data_[i * dim_ + k]; }
    double& operator()(std::size_t i, std::size_t k) { return data_[i * dim_ + k]; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool all_finite() const;

    bool operator==(const CoordTable&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> data_;
};

struct ItemSet {
    std::size_t n_items = 0;
    std::vector<std::string> labels;      // empty, or one per item
    std::vector<std::string> image_refs;  // empty, or one per item

    static ItemSet with_count(std::size_t n);
    void validate() const;
    bool operator==(const ItemSet&) const = default;
};

struct GroundTruth {
    std::vector<CoordTable> aspects;
    std::vector<std::string> aspect_names;  // empty, or one per aspect

    std::size_t n_aspects() const { return aspects.size(); }
    std::size_t n_items() const { return aspects.empty() ? 0 : aspects.front().rows(); }
    std::size_t dim() const { return aspects.empty() ? 0 : aspects.front().dim(); }
    void validate() const;
    bool operator==(const GroundTruth&) const = default;
};

// Qualitative pair measure: theta = 1 similar, 0 dissimilar.
struct Tuple {
    ItemIndex i = 0;
    ItemIndex j = 0;
    std::uint8_t theta = 0;

    bool operator==(const Tuple&) const = default;
};

struct Triplet {
    ItemIndex i = 0;  // anchor
    ItemIndex j = 0;  // closer to i
    ItemIndex k = 0;  // farther from i

    bool operator==(const Triplet&) const = default;
};

using Partition = std::vector<std::vector<ItemIndex>>;

// One query's answer. `tuples` are normally derived from `clusters`; bundles
// built from triplets carry explicit tuples and no clusters.
struct Bundle {
    QueryId query_id = 0;
    std::vector<ItemIndex> items;
    Partition clusters;
    std::vector<Tuple> tuples;
    std::optional<int> source_aspect;
    int phase = 0;

    bool operator==(const Bundle&) const = default;
};

// True iff `clusters` are non-empty, disjoint, and cover exactly `items`.
bool is_partition_of(std::span<const ItemIndex> items, const Partition& clusters);

// Checks the structural invariants: i != j, theta binary, tuple items drawn
// from `items`, clusters partitioning `items`, and C(N,2) tuples when
// clusters are present. Throws std::invalid_argument on violation.
void validate_bundle(const Bundle& b);

std::size_t total_tuples(std::span<const Bundle> bundles);

struct MultiEmbedding {
    std::vector<CoordTable> spaces;

    std::size_t n_spaces() const { return spaces.size(); }
    std::size_t n_items() const { return spaces.empty() ? 0 : spaces.front().rows(); }
    std::size_t dim() const { return spaces.empty() ? 0 : spaces.front().dim(); }
    void validate() const;
    bool operator==(const MultiEmbedding&) const = default;
};

// Unconstrained scores beta and their row-wise softmax alpha, both rows x cols.
class AspectWeights {
public:
    AspectWeights() = default;
    static AspectWeights uniform(std::size_t rows, std::size_t cols);
    static AspectWeights from_beta(std::size_t rows, std::size_t cols, std::vector<double> beta);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    double beta(std::size_t r, std::size_t s) const { return beta_[r * cols_ + s]; }
    double alpha(std::size_t r, std::size_t s) const { return alpha_[r * cols_ + s]; }
    std::span<const double> alpha_row(std::size_t r) const { return {alpha_.data() + r * cols_, cols_}; }
    const std::vector<double>& beta() const { return beta_; }
    const std::vector<double>& alpha() const { return alpha_; }

    std::size_t argmax(std::size_t r) const;

    bool operator==(const AspectWeights&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> beta_;
    std::vector<double> alpha_;
};

// Numerically stable softmax of `in` into `out` (same length).
void softmax(std::span<const double> in, std::span<double> out);

enum class Mode { bundled, nonbundled };

struct OptimConfig {
    std::size_t n_embeddings = 2;
    std::size_t dim = 2;
    double margin = 0.05;
    double learning_rate = 0.01;
    std::size_t iterations = 100;
    std::uint64_t seed = 0;
    double init_scale = 0.05;
    // Adam constants.
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    // 0 = full batch. Otherwise number of bundles per step, reshuffled per epoch.
    std::size_t batch_size = 0;
    // Divide each bundle's loss by its tuple count. Off by default.
    bool normalize_bundle_loss = false;

    void validate() const;
};

enum class SamplingStrategy { random, local };
enum class AspectAssignment { balanced, uniform };

struct QueryConfig {
    std::size_t query_size = 20;
    std::size_t bin_count = 5;
    std::size_t n_queries = 600;  // per aspect
    SamplingStrategy strategy = SamplingStrategy::random;
    std::size_t phases = 1;
    std::uint64_t seed = 0;
    // balanced: exactly n_queries answered under each aspect, order shuffled.
    // uniform: each query independently picks an aspect.
    AspectAssignment aspect_assignment = AspectAssignment::balanced;
    std::size_t neighborhood_factor = 5;

    void validate(std::size_t n_items) const;
};

std::string to_string(Mode m);
Mode parse_mode(const std::string& s);
std::string to_string(SamplingStrategy s);
SamplingStrategy parse_strategy(const std::string& s);
std::string to_string(AspectAssignment a);
AspectAssignment parse_assignment(const std::string& s);

}  // namespace bundlembed
