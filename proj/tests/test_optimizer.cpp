#include "doctest.h"

#include <cmath>

#include "bundlembed/experiment.hpp"
#include "bundlembed/optimizer.hpp"
#include "bundlembed/rng.hpp"
#include "bundlembed/sampler.hpp"
#include "oracles.hpp"

using namespace bundlembed;

namespace {

std::vector<Bundle> random_bundles(std::size_t n_items, std::size_t count, std::size_t size, Rng& rng) {
    std::vector<Bundle> out;
    for (std::size_t q = 0; q < count; ++q) {
        std::vector<ItemIndex> items;
        for (auto i : rng.sample_without_replacement(n_items, size)) items.push_back(static_cast<ItemIndex>(i));
        Partition p(2);
        for (auto i : items) p[rng.uniform_index(2)].push_back(i);
        std::erase_if(p, [](const auto& c) { return c.empty(); });
        out.push_back(make_bundle(q, items, p));
    }
    return out;
}

MultiEmbedding random_embedding(std::size_t spaces, std::size_t n, std::size_t dim, double scale, Rng& rng) {
    MultiEmbedding e;
    for (std::size_t s = 0; s < spaces; ++s) {
        CoordTable t(n, dim);
        for (double& v : t.data()) v = rng.uniform(-scale, scale);
        e.spaces.push_back(t);
    }
    return e;
}

// Flattens coordinates then beta into one vector.
std::vector<double> pack(const MultiEmbedding& e, const AspectWeights& w) {
    std::vector<double> x;
    for (const auto& s : e.spaces) x.insert(x.end(), s.data().begin(), s.data().end());
    x.insert(x.end(), w.beta().begin(), w.beta().end());
    return x;
}

double min_kink_gap(const std::vector<Bundle>& bundles, const MultiEmbedding& e, double m) {
    double gap = INFINITY;
    for (const auto& b : bundles)
        for (const auto& t : b.tuples)
            for (const auto& s : e.spaces) {
                const double d = oracle::dist(s, t.i, t.j);
                gap = std::min(gap, std::abs(d - m));
                if (!t.theta) gap = std::min(gap, d);
            }
    return gap;
}

}  // namespace

TEST_CASE("tuple_loss on hand values") {
    CoordTable t(2, 2, {0.0, 0.0, 0.3, 0.4});
    CHECK(tuple_loss({0, 1, 1}, t, 1.0) == doctest::Approx(0.25));
    CHECK(tuple_loss({0, 1, 0}, t, 1.0) == doctest::Approx(0.25));
    CHECK(tuple_loss({0, 1, 0}, t, 0.5) == 0.0);
    CHECK(tuple_loss({0, 1, 0}, t, 0.6) == doctest::Approx(0.01));
}

TEST_CASE("objectives match the naive oracle") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto bundles = random_bundles(12, 4, 5, rng);
        const auto emb = random_embedding(3, 12, 2, 1.0, rng);
        std::vector<double> beta(bundles.size() * 3);
        for (double& b : beta) b = rng.normal();
        const auto w = AspectWeights::from_beta(bundles.size(), 3, beta);
        std::vector<std::vector<double>> alpha;
        for (std::size_t r = 0; r < w.rows(); ++r) alpha.emplace_back(w.alpha_row(r).begin(), w.alpha_row(r).end());
        CHECK(objective_bundled(bundles, emb, w, 0.7) ==
              doctest::Approx(oracle::objective_bundled(bundles, emb, alpha, 0.7)).epsilon(1e-12));
    }
}

TEST_CASE("all-coincident similar points have zero coordinate gradient") {
    const std::vector<Bundle> bundles = {make_bundle(0, {0, 1, 2}, {{0, 1, 2}})};
    MultiEmbedding e{{CoordTable(3, 2, std::vector<double>(6, 0.25))}};
    const auto data = ObjectiveData::from_bundles(bundles, Mode::bundled);
    const auto g = gradients(data, e, AspectWeights::uniform(1, 1), 1.0);
    CHECK(g.loss == 0.0);
    for (double v : g.coords[0].data()) CHECK(v == 0.0);
}

TEST_CASE("uniform beta row with equal per-space losses has zero beta gradient") {
    const std::vector<Bundle> bundles = {make_bundle(0, {0, 1, 2}, {{0, 1}, {2}})};
    CoordTable t(3, 2, {0.0, 0.0, 0.1, 0.2, -0.3, 0.4});
    MultiEmbedding e{{t, t}};
    const auto data = ObjectiveData::from_bundles(bundles, Mode::bundled);
    const auto g = gradients(data, e, AspectWeights::uniform(1, 2), 1.0);
    CHECK(g.loss > 0.0);
    for (double v : g.beta) CHECK(std::abs(v) < 1e-15);
}

TEST_CASE("analytic gradients match central differences") {
    const double h = 1e-5, m = 0.8;
    double worst = 0.0;
    int checked = 0;
    for (std::uint64_t seed = 1; checked < 25 && seed < 200; ++seed) {
        Rng rng(seed);
        const auto bundles = random_bundles(10, 3, 5, rng);
        auto emb = random_embedding(2, 10, 2, 1.0, rng);
        std::vector<double> beta(bundles.size() * 2);
        for (double& b : beta) b = rng.normal();
        auto w = AspectWeights::from_beta(bundles.size(), 2, beta);
        if (min_kink_gap(bundles, emb, m) < 1e-4) continue;
        for (const Mode mode : {Mode::bundled, Mode::nonbundled}) {
            const auto data = ObjectiveData::from_bundles(bundles, mode);
            auto wm = mode == Mode::bundled ? w : AspectWeights::from_beta(data.n_rows(), 2, [&] {
                std::vector<double> b(data.n_rows() * 2);
                for (double& v : b) v = rng.normal();
                return b;
            }());
            const auto g = gradients(data, emb, wm, m);
            std::vector<double> analytic;
            for (const auto& c : g.coords) analytic.insert(analytic.end(), c.data().begin(), c.data().end());
            analytic.insert(analytic.end(), g.beta.begin(), g.beta.end());
            std::vector<std::vector<Tuple>> rows;
            for (std::size_t r = 0; r < data.n_rows(); ++r) rows.emplace_back(data.row(r).begin(), data.row(r).end());
            const auto packed = pack(emb, wm);
            const auto numeric = oracle::central_differences_ld(
                [&](const std::vector<long double>& x) { return oracle::objective_packed_ld(rows, 2, 10, 2, x, m); },
                std::vector<long double>(packed.begin(), packed.end()), h);
            REQUIRE(numeric.size() == analytic.size());
            for (std::size_t k = 0; k < analytic.size(); ++k) {
                const double rel = std::abs(analytic[k] - numeric[k]) /
                                   std::max({std::abs(analytic[k]), std::abs(numeric[k]), 1e-6});
                worst = std::max(worst, rel);
            }
        }
        ++checked;
    }
    MESSAGE("worst relative error " << worst);
    CHECK(checked >= 20);
    CHECK(worst < 1e-5);
}

TEST_CASE("identical initialization gives identical coordinate gradients across spaces") {
    Rng rng(9);
    const auto bundles = random_bundles(15, 5, 6, rng);
    auto one = random_embedding(1, 15, 2, 1.0, rng);
    MultiEmbedding e{{one.spaces[0], one.spaces[0], one.spaces[0]}};
    const auto data = ObjectiveData::from_bundles(bundles, Mode::bundled);
    const auto g = gradients(data, e, AspectWeights::uniform(bundles.size(), 3), 1.0);
    CHECK(g.coords[0] == g.coords[1]);
    CHECK(g.coords[1] == g.coords[2]);
}

TEST_CASE("zero iterations return the initialization with uniform alpha") {
    Rng rng(3);
    const auto bundles = random_bundles(20, 6, 5, rng);
    OptimConfig cfg;
    cfg.iterations = 0;
    cfg.seed = 17;
    const auto data = ObjectiveData::from_bundles(bundles, Mode::bundled);
    const auto init = initial_state(data, 20, cfg);
    const auto r = optimize(bundles, 20, cfg, Mode::bundled);
    CHECK(r.trace.empty());
    CHECK(r.embedding == init.embedding);
    CHECK(r.weights == AspectWeights::uniform(bundles.size(), cfg.n_embeddings));
    for (const auto& s : r.embedding.spaces)
        for (double v : s.data()) CHECK(std::abs(v) <= cfg.init_scale);
}

TEST_CASE("single aspect: similar pairs end closer than dissimilar ones") {
    const auto all = ao_shapes();
    const std::vector<ShapeSpec> shapes = {all[1]};
    const auto gt = generate_ground_truth(shapes, 4);
    QueryConfig qc;
    qc.n_queries = 300;
    OptimConfig cfg;
    cfg.n_embeddings = 1;
    cfg.seed = 4;
    const auto bundles = collect_bundles(gt, qc, 4, cfg);
    const auto r = optimize(bundles, gt.n_items(), cfg, Mode::bundled);
    // Each same-cluster pair (i,j) against each other-cluster item k of the bundle.
    const auto& e = r.embedding.spaces[0];
    std::size_t ok = 0, total = 0;
    for (const auto& b : bundles)
        for (std::size_t c = 0; c < b.clusters.size(); ++c)
            for (auto i : b.clusters[c])
                for (auto j : b.clusters[c]) {
                    if (i == j) continue;
                    for (std::size_t c2 = 0; c2 < b.clusters.size(); ++c2) {
                        if (c2 == c) continue;
                        for (auto k : b.clusters[c2]) {
                            ok += oracle::dist(e, i, j) < oracle::dist(e, i, k);
                            ++total;
                        }
                    }
                }
    REQUIRE(total > 0);
    MESSAGE("ordered fraction " << static_cast<double>(ok) / static_cast<double>(total));
    CHECK(static_cast<double>(ok) >= 0.95 * static_cast<double>(total));
}

TEST_CASE("AO run: loss windows, simplex, determinism") {
    ExperimentSpec spec;
    spec.shapes = ao_shapes();
    spec.seed_all(2);
    const auto gt = generate_ground_truth(spec.shapes, spec.ground_truth_seed);
    OptimConfig cfg = spec.optim;
    cfg.n_embeddings = 2;
    const auto bundles = collect_bundles(gt, spec.query, spec.answer_seed, cfg);
    bool simplex = true;
    const auto r = optimize(bundles, gt.n_items(), cfg, Mode::bundled, [&](const OptimState& st, TraceRecord&) {
        for (std::size_t q = 0; q < st.weights.rows(); ++q) {
            double sum = 0.0;
            for (double a : st.weights.alpha_row(q)) {
                simplex = simplex && a > 0.0 && a < 1.0;
                sum += a;
            }
            simplex = simplex && std::abs(sum - 1.0) < 1e-12;
        }
    });
    CHECK(simplex);
    REQUIRE(r.trace.size() == 100);
    CHECK(r.trace.front().iteration == 1);
    CHECK(r.trace.back().iteration == 100);

    std::size_t windows = 0, good = 0;
    for (std::size_t t = 0; t + 10 < r.trace.size(); ++t, ++windows)
        good += r.trace[t + 10].total_loss <= r.trace[t].total_loss;
    CHECK(static_cast<double>(good) >= 0.9 * static_cast<double>(windows));

    const auto again = optimize(bundles, gt.n_items(), cfg, Mode::bundled);
    CHECK(again.embedding == r.embedding);
    CHECK(again.weights == r.weights);
}

TEST_CASE("minibatch runs are deterministic and reduce the loss") {
    Rng rng(8);
    const auto bundles = random_bundles(40, 30, 8, rng);
    OptimConfig cfg;
    cfg.batch_size = 7;
    cfg.iterations = 60;
    cfg.seed = 2;
    const auto a = optimize(bundles, 40, cfg, Mode::bundled);
    const auto b = optimize(bundles, 40, cfg, Mode::bundled);
    CHECK(a.embedding == b.embedding);
    CHECK(a.trace.size() == 60);
    const auto data = ObjectiveData::from_bundles(bundles, Mode::bundled);
    const auto init = initial_state(data, 40, cfg);
    CHECK(a.trace.back().total_loss < evaluate_objective(data, init.embedding, init.weights, cfg.margin, nullptr));
}

TEST_CASE("non-finite loss aborts with state and partial trace") {
    Rng rng(4);
    const auto bundles = random_bundles(10, 3, 5, rng);
    OptimConfig cfg;
    cfg.learning_rate = 1e306;
    cfg.iterations = 50;
    try {
        optimize(bundles, 10, cfg, Mode::bundled);
        FAIL("expected OptimizerAbort");
    } catch (const OptimizerAbort& e) {
        CHECK(e.trace.size() < 50);
        CHECK(e.state.step == e.trace.size() + 1);
        CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
    }
}

TEST_CASE("optimize input errors") {
    OptimConfig cfg;
    CHECK_THROWS(optimize(std::vector<Bundle>{}, 10, cfg, Mode::bundled));
    const std::vector<Bundle> b = {make_bundle(0, {0, 12}, {{0}, {12}})};
    CHECK_THROWS(optimize(b, 10, cfg, Mode::bundled));
}

TEST_CASE("nonbundled rows are tuples") {
    const std::vector<Bundle> b = {make_bundle(0, {0, 1, 2}, {{0, 1}, {2}}), make_bundle(1, {3, 4}, {{3, 4}})};
    const auto bundled = ObjectiveData::from_bundles(b, Mode::bundled);
    const auto flat = ObjectiveData::from_bundles(b, Mode::nonbundled);
    CHECK(bundled.n_rows() == 2);
    CHECK(flat.n_rows() == 4);
    CHECK(flat.n_bundles() == 2);
    CHECK(flat.bundle_of_row(3) == 1);
    const auto r = optimize(b, 5, OptimConfig{}, Mode::nonbundled);
    CHECK(r.weights.rows() == 4);
}
