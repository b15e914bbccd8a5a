#include "bundlembed/experiment.hpp"

#include "bundlembed/io.hpp"
#include "bundlembed/rng.hpp"
#include "bundlembed/sampler.hpp"

namespace bundlembed {

void ExperimentSpec::seed_all(std::uint64_t master) {
    ground_truth_seed = derive_seed(master, "ground-truth");
    query.seed = derive_seed(master, "queries");
    answer_seed = derive_seed(master, "answers");
    optim.seed = derive_seed(master, "optimizer");
    if (noise) noise->seed = derive_seed(master, "noise");
}

std::vector<ShapeSpec> aob_shapes(std::size_t n_points) {
    return {
        {Shape::letter_A, n_points, IndexOrder::sequential, {}},
        {Shape::letter_O, n_points, IndexOrder::random, {}},
        {Shape::butterfly, n_points, IndexOrder::sequential, {}},
    };
}

std::vector<ShapeSpec> ao_shapes(std::size_t n_points) {
    auto s = aob_shapes(n_points);
    s.pop_back();
    return s;
}

std::vector<std::vector<ItemIndex>> random_queries(std::size_t n_items, std::size_t count, std::size_t query_size,
                                                   std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<ItemIndex>> out;
    out.reserve(count);
    for (std::size_t q = 0; q < count; ++q) out.push_back(sample_random(n_items, query_size, rng));
    return out;
}

std::vector<Bundle> collect_bundles(const GroundTruth& gt, const QueryConfig& qc, std::uint64_t answer_seed,
                                    const OptimConfig& optim) {
    gt.validate();
    qc.validate(gt.n_items());
    const std::size_t n_aspects = gt.n_aspects();
    if (qc.strategy == SamplingStrategy::random) {
        auto queries = random_queries(gt.n_items(), qc.n_queries * n_aspects, qc.query_size, qc.seed);
        return simulate_answers(gt, queries, qc, answer_seed);
    }

    std::vector<Bundle> bundles;
    SamplingState state(SamplingStrategy::local, std::nullopt, 0, qc.neighborhood_factor);
    OptimConfig phase_cfg = optim;
    phase_cfg.n_embeddings = n_aspects;
    for (std::size_t phase = 0; phase < qc.phases; ++phase) {
        // Per-aspect quota for this phase; the remainder goes to the last phase.
        std::size_t per_aspect = qc.n_queries / qc.phases;
        if (phase + 1 == qc.phases) per_aspect = qc.n_queries - per_aspect * (qc.phases - 1);
        Rng rng(derive_seed(qc.seed, phase));
        std::vector<std::vector<ItemIndex>> queries;
        for (std::size_t q = 0; q < per_aspect * n_aspects; ++q)
            queries.push_back(sample_local(state, gt.n_items(), qc.query_size, rng).items);
        auto answered = simulate_answers(gt, queries, qc, derive_seed(answer_seed, phase), bundles.size(),
                                         static_cast<int>(phase));
        bundles.insert(bundles.end(), answered.begin(), answered.end());
        if (phase + 1 < qc.phases) {
            auto res = optimize(bundles, gt.n_items(), phase_cfg, Mode::bundled);
            state = SamplingState(SamplingStrategy::local, std::move(res.embedding), static_cast<int>(phase) + 1,
                                  qc.neighborhood_factor);
        }
    }
    return bundles;
}

RunSummary run_optimization(std::span<const Bundle> bundles, std::size_t n_items, const OptimConfig& cfg, Mode mode,
                            const GroundTruth* truth, const MetricConfig& metric, std::size_t ndcg_every) {
    const bool two_spaces = cfg.n_embeddings == 2;
    Observer observer = [&](const OptimState& st, TraceRecord& rec) {
        if (two_spaces) rec.uncertainty = affiliation_uncertainty(st.weights);
        if (truth && ndcg_every > 0 && (rec.iteration % ndcg_every == 0 || rec.iteration == cfg.iterations)) {
            auto r = ndcg_multi(st.embedding, *truth, metric);
            rec.mean_ndcg = r.mean;
            rec.per_embedding_ndcg = r.per_space;
        }
    };
    RunSummary out;
    out.result = optimize(bundles, n_items, cfg, mode, observer);
    if (truth && truth->n_aspects() == cfg.n_embeddings) out.ndcg = ndcg_multi(out.result.embedding, *truth, metric);
    if (two_spaces) out.uncertainty = affiliation_uncertainty(out.result.weights);
    return out;
}

ExperimentOutcome run_experiment(const ExperimentSpec& spec, std::size_t ndcg_every) {
    ExperimentOutcome out;
    out.truth = spec.ground_truth_file ? read_ground_truth(*spec.ground_truth_file)
                                       : generate_ground_truth(spec.shapes, spec.ground_truth_seed);
    OptimConfig cfg = spec.optim;
    cfg.n_embeddings = out.truth.n_aspects();
    cfg.dim = out.truth.dim();
    out.bundles = collect_bundles(out.truth, spec.query, spec.answer_seed, cfg);
    if (spec.noise) out.bundles = inject_noise(std::move(out.bundles), *spec.noise);
    out.run = run_optimization(out.bundles, out.truth.n_items(), cfg, spec.mode, &out.truth, spec.metric, ndcg_every);
    return out;
}

}  // namespace bundlembed
