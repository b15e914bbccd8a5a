#pragma once

#include <functional>
#include <utility>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "bundlembed/core.hpp"

namespace bundlembed {

double pair_distance(std::span<const double> a, std::span<const double> b);

// Contrastive loss of one tuple: theta*d^2 + (1-theta)*max(0, m-d)^2.
double tuple_loss(const Tuple& t, const CoordTable& space, double margin);

double bundle_loss(const Bundle& b, const CoordTable& space, double margin);

// Sum over bundles q and spaces s of alpha[q][s] * bundle_loss(q, s).
double objective_bundled(std::span<const Bundle> bundles, const MultiEmbedding& emb, const AspectWeights& w,
                         double margin);

// Sum over tuples t and spaces s of alpha[t][s] * tuple_loss(t, s).
double objective_nonbundled(std::span<const Tuple> tuples, const MultiEmbedding& emb, const AspectWeights& w,
                            double margin);

// Tuples flattened into rows; each row shares one aspect-weight row. A row is
// a whole bundle in bundled mode and a single tuple in nonbundled mode.
class ObjectiveData {
public:
    static ObjectiveData from_bundles(std::span<const Bundle> bundles, Mode mode, bool normalize = false);
    static ObjectiveData from_tuples(std::span<const Tuple> tuples);

    std::size_t n_rows() const { return row_begin_.size() - 1; }
    std::size_t n_tuples() const { return tuples_.size(); }
    std::span<const Tuple> row(std::size_t r) const {
        return {tuples_.data() + row_begin_[r], row_begin_[r + 1] - row_begin_[r]};
    }
    double row_scale(std::size_t r) const { return row_scale_.empty() ? 1.0 : row_scale_[r]; }
    // Bundle index owning row r.
    std::size_t bundle_of_row(std::size_t r) const { return row_bundle_.empty() ? r : row_bundle_[r]; }
    std::size_t n_bundles() const { return bundle_row_begin_.size() - 1; }
    // Rows [first, last) belonging to bundle b.
    std::pair<std::size_t, std::size_t> bundle_rows(std::size_t b) const {
        return {bundle_row_begin_[b], bundle_row_begin_[b + 1]};
    }
    std::size_t max_item() const { return max_item_; }

private:
    std::vector<Tuple> tuples_;
    std::vector<std::size_t> row_begin_{0};
    std::vector<double> row_scale_;
    std::vector<std::size_t> row_bundle_;
    std::vector<std::size_t> bundle_row_begin_{0};
    std::size_t max_item_ = 0;
};

struct Gradients {
    double loss = 0.0;
    std::vector<CoordTable> coords;  // one per space
    std::vector<double> beta;        // rows x spaces
};

// Objective value and, when `grad` is non-null, its analytic gradient with
// respect to every coordinate and every beta entry. The hinge subgradient is
// 0 at d = m, and a dissimilar pair at d = 0 contributes no coordinate
// gradient. `rows`, when given, restricts evaluation to those rows.
double evaluate_objective(const ObjectiveData& data, const MultiEmbedding& emb, const AspectWeights& w,
                          double margin, Gradients* grad,
                          std::optional<std::span<const std::size_t>> rows = std::nullopt);

Gradients gradients(const ObjectiveData& data, const MultiEmbedding& emb, const AspectWeights& w, double margin);

struct OptimState {
    MultiEmbedding embedding;
    AspectWeights weights;
    std::vector<CoordTable> coord_m1, coord_m2;
    std::vector<double> beta_m1, beta_m2;
    std::size_t step = 0;
};

struct TraceRecord {
    std::size_t iteration = 0;
    double total_loss = 0.0;
    std::optional<double> mean_ndcg;
    std::optional<std::vector<double>> per_embedding_ndcg;
    std::optional<double> uncertainty;
};

struct OptimResult {
    MultiEmbedding embedding;
    AspectWeights weights;
    std::vector<TraceRecord> trace;
};

// Called after every step with the updated state; may fill the optional
// fields of the record.
using Observer = std::function<void(const OptimState&, TraceRecord&)>;

class OptimizerAbort : public std::runtime_error {
public:
    OptimizerAbort(const std::string& what, OptimState state, std::vector<TraceRecord> trace)
        : std::runtime_error(what), state(std::move(state)), trace(std::move(trace)) {}
    OptimState state;
    std::vector<TraceRecord> trace;
};

// Uniform init in [-init_scale, init_scale]^dim, beta = 0.
OptimState initial_state(const ObjectiveData& data, std::size_t n_items, const OptimConfig& cfg);

// One Adam step on coordinates and beta given precomputed gradients.
void adam_step(OptimState& state, const Gradients& g, const OptimConfig& cfg);

// Runs cfg.iterations Adam steps. The trace row for iteration t describes the
// state after t steps. Throws OptimizerAbort on a non-finite loss.
OptimResult optimize(const ObjectiveData& data, std::size_t n_items, const OptimConfig& cfg,
                     const Observer& observer = {});

OptimResult optimize(std::span<const Bundle> bundles, std::size_t n_items, const OptimConfig& cfg, Mode mode,
                     const Observer& observer = {});

}  // namespace bundlembed
