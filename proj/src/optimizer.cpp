#include "bundlembed/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "bundlembed/rng.hpp"

namespace bundlembed {

double pair_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return std::sqrt(s);
}

double tuple_loss(const Tuple& t, const CoordTable& space, double margin) {
    const double d = pair_distance(space.row(t.i), space.row(t.j));
    if (t.theta) return d * d;
    const double h = std::max(0.0, margin - d);
    return h * h;
}

double bundle_loss(const Bundle& b, const CoordTable& space, double margin) {
    double sum = 0.0;
    for (const auto& t : b.tuples) sum += tuple_loss(t, space, margin);
    return sum;
}

double objective_bundled(std::span<const Bundle> bundles, const MultiEmbedding& emb, const AspectWeights& w,
                         double margin) {
    if (w.rows() != bundles.size() || w.cols() != emb.n_spaces())
        throw std::invalid_argument("objective_bundled: weights shape does not match bundles x spaces");
    double total = 0.0;
    for (std::size_t q = 0; q < bundles.size(); ++q)
        for (std::size_t s = 0; s < emb.n_spaces(); ++s)
            total += w.alpha(q, s) * bundle_loss(bundles[q], emb.spaces[s], margin);
    return total;
}

double objective_nonbundled(std::span<const Tuple> tuples, const MultiEmbedding& emb, const AspectWeights& w,
                            double margin) {
    if (w.rows() != tuples.size() || w.cols() != emb.n_spaces())
        throw std::invalid_argument("objective_nonbundled: weights shape does not match tuples x spaces");
    double total = 0.0;
    for (std::size_t s = 0; s < emb.n_spaces(); ++s)
        for (std::size_t t = 0; t < tuples.size(); ++t)
            total += w.alpha(t, s) * tuple_loss(tuples[t], emb.spaces[s], margin);
    return total;
}

ObjectiveData ObjectiveData::from_bundles(std::span<const Bundle> bundles, Mode mode, bool normalize) {
    ObjectiveData d;
    for (std::size_t b = 0; b < bundles.size(); ++b) {
        const auto& tuples = bundles[b].tuples;
        for (const auto& t : tuples) {
            d.tuples_.push_back(t);
            d.max_item_ = std::max<std::size_t>({d.max_item_, t.i, t.j});
        }
        if (mode == Mode::bundled) {
            d.row_begin_.push_back(d.tuples_.size());
            d.row_bundle_.push_back(b);
            d.row_scale_.push_back(normalize && !tuples.empty() ? 1.0 / static_cast<double>(tuples.size()) : 1.0);
        } else {
            for (std::size_t k = 0; k < tuples.size(); ++k) {
                d.row_begin_.push_back(d.row_begin_.back() + 1);
                d.row_bundle_.push_back(b);
            }
        }
        d.bundle_row_begin_.push_back(d.row_begin_.size() - 1);
    }
    if (!normalize || mode == Mode::nonbundled) d.row_scale_.clear();
    return d;
}

ObjectiveData ObjectiveData::from_tuples(std::span<const Tuple> tuples) {
    ObjectiveData d;
    for (const auto& t : tuples) {
        d.tuples_.push_back(t);
        d.max_item_ = std::max<std::size_t>({d.max_item_, t.i, t.j});
        d.row_begin_.push_back(d.tuples_.size());
        d.bundle_row_begin_.push_back(d.row_begin_.size() - 1);
    }
    return d;
}

double evaluate_objective(const ObjectiveData& data, const MultiEmbedding& emb, const AspectWeights& w,
                          double margin, Gradients* grad, std::optional<std::span<const std::size_t>> rows) {
    const std::size_t n_spaces = emb.n_spaces();
    const std::size_t dim = emb.dim();
    if (w.rows() != data.n_rows() || w.cols() != n_spaces)
        throw std::invalid_argument("evaluate_objective: weights shape does not match rows x spaces");
    if (data.n_tuples() > 0 && data.max_item() >= emb.n_items())
        throw std::invalid_argument("evaluate_objective: tuple references an item outside the embedding");

    std::vector<std::size_t> all_rows;
    if (!rows) {
        all_rows.resize(data.n_rows());
        std::iota(all_rows.begin(), all_rows.end(), 0);
    }
    const std::span<const std::size_t> active = rows ? *rows : std::span<const std::size_t>(all_rows);

    if (grad) {
        grad->coords.assign(n_spaces, CoordTable(emb.n_items(), dim));
        grad->beta.assign(data.n_rows() * n_spaces, 0.0);
    }
    std::vector<double> row_loss(active.size() * n_spaces, 0.0);
    std::vector<double> diff(dim);

    for (std::size_t s = 0; s < n_spaces; ++s) {
        const CoordTable& x = emb.spaces[s];
        CoordTable* g = grad ? &grad->coords[s] : nullptr;
        for (std::size_t a = 0; a < active.size(); ++a) {
            const std::size_t r = active[a];
            const double scale = data.row_scale(r);
            const double weight = w.alpha(r, s) * scale;
            double sum = 0.0;
            for (const Tuple& t : data.row(r)) {
                const double* xi = x.row(t.i).data();
                const double* xj = x.row(t.j).data();
                double d2 = 0.0;
                for (std::size_t k = 0; k < dim; ++k) {
                    diff[k] = xi[k] - xj[k];
                    d2 += diff[k] * diff[k];
                }
                double coef;  // d loss / d xi = coef * (xi - xj)
                if (t.theta) {
                    sum += d2;
                    coef = 2.0;
                } else {
                    const double d = std::sqrt(d2);
                    if (d >= margin) continue;
                    const double h = margin - d;
                    sum += h * h;
                    coef = d > 0.0 ? -2.0 * h / d : 0.0;
                }
                if (g && coef != 0.0) {
                    const double c = weight * coef;
                    double* gi = g->row(t.i).data();
                    double* gj = g->row(t.j).data();
                    for (std::size_t k = 0; k < dim; ++k) {
                        gi[k] += c * diff[k];
                        gj[k] -= c * diff[k];
                    }
                }
            }
            row_loss[a * n_spaces + s] = scale * sum;
        }
    }

    double total = 0.0;
    for (std::size_t a = 0; a < active.size(); ++a) {
        const std::size_t r = active[a];
        double expected = 0.0;
        for (std::size_t s = 0; s < n_spaces; ++s) expected += w.alpha(r, s) * row_loss[a * n_spaces + s];
        total += expected;
        if (grad) {
            // d/d beta_rs of sum_s' softmax(beta_r)_s' L_rs' = alpha_rs (L_rs - expected)
            for (std::size_t s = 0; s < n_spaces; ++s)
                grad->beta[r * n_spaces + s] = w.alpha(r, s) * (row_loss[a * n_spaces + s] - expected);
        }
    }
    if (grad) grad->loss = total;
    return total;
}

Gradients gradients(const ObjectiveData& data, const MultiEmbedding& emb, const AspectWeights& w, double margin) {
    Gradients g;
    evaluate_objective(data, emb, w, margin, &g);
    return g;
}

OptimState initial_state(const ObjectiveData& data, std::size_t n_items, const OptimConfig& cfg) {
    cfg.validate();
    if (n_items < 2) throw std::invalid_argument("optimize: need at least 2 items");
    if (data.n_tuples() > 0 && data.max_item() >= n_items)
        throw std::invalid_argument("optimize: tuple references an item outside the item set");
    OptimState st;
    Rng rng(cfg.seed);
    for (std::size_t s = 0; s < cfg.n_embeddings; ++s) {
        CoordTable t(n_items, cfg.dim);
        for (double& v : t.data()) v = rng.uniform(-cfg.init_scale, cfg.init_scale);
        st.embedding.spaces.push_back(std::move(t));
    }
    st.weights = AspectWeights::uniform(data.n_rows(), cfg.n_embeddings);
    st.coord_m1.assign(cfg.n_embeddings, CoordTable(n_items, cfg.dim));
    st.coord_m2 = st.coord_m1;
    st.beta_m1.assign(data.n_rows() * cfg.n_embeddings, 0.0);
    st.beta_m2 = st.beta_m1;
    return st;
}

namespace {

void adam_update(std::span<const double> grad, std::span<double> m1, std::span<double> m2, std::span<double> x,
                 const OptimConfig& cfg, double bias1, double bias2) {
    for (std::size_t k = 0; k < x.size(); ++k) {
        m1[k] = cfg.beta1 * m1[k] + (1.0 - cfg.beta1) * grad[k];
        m2[k] = cfg.beta2 * m2[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
        x[k] -= cfg.learning_rate * (m1[k] / bias1) / (std::sqrt(m2[k] / bias2) + cfg.epsilon);
    }
}

std::string describe_abort(const OptimState& st, double loss) {
    std::ostringstream os;
    os << "optimizer aborted: non-finite loss " << loss << " at step " << st.step;
    return os.str();
}

}  // namespace

void adam_step(OptimState& state, const Gradients& g, const OptimConfig& cfg) {
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bias1 = 1.0 - std::pow(cfg.beta1, t);
    const double bias2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t s = 0; s < state.embedding.n_spaces(); ++s) {
        adam_update(g.coords[s].data(), state.coord_m1[s].data(), state.coord_m2[s].data(),
                    state.embedding.spaces[s].data(), cfg, bias1, bias2);
    }
    std::vector<double> beta = state.weights.beta();
    adam_update(g.beta, state.beta_m1, state.beta_m2, beta, cfg, bias1, bias2);
    state.weights = AspectWeights::from_beta(state.weights.rows(), state.weights.cols(), std::move(beta));
}

OptimResult optimize(const ObjectiveData& data, std::size_t n_items, const OptimConfig& cfg,
                     const Observer& observer) {
    if (data.n_rows() == 0) throw std::invalid_argument("optimize: no bundles");
    OptimState st = initial_state(data, n_items, cfg);
    std::vector<TraceRecord> trace;
    trace.reserve(cfg.iterations);

    const bool full_batch = cfg.batch_size == 0 || cfg.batch_size >= data.n_bundles();
    Rng batch_rng(derive_seed(cfg.seed, "minibatch"));
    std::vector<std::size_t> bundle_order(data.n_bundles());
    std::iota(bundle_order.begin(), bundle_order.end(), 0);
    std::size_t cursor = bundle_order.size();
    std::vector<std::size_t> batch_rows;

    Gradients g;
    if (full_batch && cfg.iterations > 0) {
        evaluate_objective(data, st.embedding, st.weights, cfg.margin, &g);
        if (!std::isfinite(g.loss)) throw OptimizerAbort(describe_abort(st, g.loss), st, trace);
    }
    for (std::size_t it = 1; it <= cfg.iterations; ++it) {
        double loss_after;
        if (full_batch) {
            adam_step(st, g, cfg);
            loss_after = evaluate_objective(data, st.embedding, st.weights, cfg.margin, &g);
        } else {
            batch_rows.clear();
            for (std::size_t k = 0; k < cfg.batch_size; ++k) {
                if (cursor == bundle_order.size()) {
                    batch_rng.shuffle(bundle_order);
                    cursor = 0;
                }
                auto [first, last] = data.bundle_rows(bundle_order[cursor++]);
                for (std::size_t r = first; r < last; ++r) batch_rows.push_back(r);
            }
            std::sort(batch_rows.begin(), batch_rows.end());
            evaluate_objective(data, st.embedding, st.weights, cfg.margin, &g, batch_rows);
            if (!std::isfinite(g.loss)) throw OptimizerAbort(describe_abort(st, g.loss), st, trace);
            adam_step(st, g, cfg);
            loss_after = evaluate_objective(data, st.embedding, st.weights, cfg.margin, nullptr);
        }
        if (!std::isfinite(loss_after)) throw OptimizerAbort(describe_abort(st, loss_after), st, trace);
        TraceRecord rec;
        rec.iteration = it;
        rec.total_loss = loss_after;
        if (observer) observer(st, rec);
        trace.push_back(std::move(rec));
    }
    return {std::move(st.embedding), std::move(st.weights), std::move(trace)};
}

OptimResult optimize(std::span<const Bundle> bundles, std::size_t n_items, const OptimConfig& cfg, Mode mode,
                     const Observer& observer) {
    return optimize(ObjectiveData::from_bundles(bundles, mode, cfg.normalize_bundle_loss), n_items, cfg, observer);
}

}  // namespace bundlembed
