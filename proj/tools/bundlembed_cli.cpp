// bundlembed: generate ground truth, simulate answers, optimize, evaluate,
// plot and serve annotation sessions.

#include <csignal>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bundlembed/experiment.hpp"
#include "bundlembed/io.hpp"
#include "bundlembed/metrics.hpp"
#include "bundlembed/optimizer.hpp"
#include "bundlembed/plot.hpp"
#include "bundlembed/rng.hpp"
#include "bundlembed/sampler.hpp"
#include "bundlembed/server.hpp"
#include "bundlembed/synthgen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bundlembed;

namespace {

struct Globals {
    std::optional<std::uint64_t> seed;
    fs::path out = ".";
    std::optional<fs::path> config;
};

// Config file contents plus the seed actually used, resolved once per run.
struct Context {
    json config = json::object();
    json inputs = json::object();
    ExperimentSpec spec;
    std::uint64_t master_seed = 0;
    fs::path out;
};

Context resolve(const Globals& g) {
    Context c;
    if (g.config) c.config = read_json_file(*g.config);
    if (g.seed) c.config["seed"] = *g.seed;
    c.inputs = c.config.value("inputs", json::object());
    c.master_seed = c.config.value("seed", std::uint64_t{0});
    c.config["seed"] = c.master_seed;
    // Component seeds stored in a manifest win, unless --seed overrides them.
    c.spec = experiment_spec_from_json(c.config);
    if (g.seed) c.spec.seed_all(*g.seed);
    if (c.spec.shapes.empty() && !c.spec.ground_truth_file) c.spec.shapes = aob_shapes();
    c.out = g.out;
    fs::create_directories(c.out);
    return c;
}

std::optional<fs::path> input_path(const Context& c, const std::string& key, const fs::path& fallback = {}) {
    if (c.inputs.contains(key) && c.inputs[key].is_string()) return fs::path(c.inputs[key].get<std::string>());
    if (!fallback.empty() && fs::exists(fallback)) return fallback;
    return std::nullopt;
}

fs::path require_input(const Context& c, const std::string& key, const fs::path& fallback) {
    auto p = input_path(c, key, fallback);
    if (!p) throw std::runtime_error("missing input '" + key + "' (expected " + fallback.string() + ")");
    return *p;
}

void write_manifest(const Context& c, const std::string& verb, const json& outputs) {
    json m = to_json(c.spec);
    m["verb"] = verb;
    m["seed"] = c.master_seed;
    m["inputs"] = c.inputs;
    m["outputs"] = outputs;
    write_json_file(c.out / (verb + "_manifest.json"), m);
}

GroundTruth load_or_generate_truth(Context& c) {
    if (auto p = input_path(c, "truth", c.out / "ground_truth.csv")) {
        c.inputs["truth"] = p->string();
        c.spec.ground_truth_file = *p;
        return read_ground_truth(*p);
    }
    if (c.spec.ground_truth_file) return read_ground_truth(*c.spec.ground_truth_file);
    return generate_ground_truth(c.spec.shapes, c.spec.ground_truth_seed);
}

std::vector<ShapeSpec> preset_shapes(const std::string& name) {
    if (name == "aob") return aob_shapes();
    if (name == "ao") return ao_shapes();
    if (name == "grid-helix")
        return {{Shape::grid_3d, 1600, IndexOrder::sequential, {}}, {Shape::helix_3d, 1600, IndexOrder::sequential, {}}};
    throw std::invalid_argument("unknown preset " + name + " (aob, ao, grid-helix)");
}

int cmd_generate(Context& c, const std::string& preset) {
    if (!preset.empty()) {
        c.spec.shapes = preset_shapes(preset);
        c.spec.ground_truth_file.reset();
    }
    const auto gt = generate_ground_truth(c.spec.shapes, c.spec.ground_truth_seed);
    const auto path = c.out / "ground_truth.csv";
    write_ground_truth(path, gt);
    write_manifest(c, "generate", {{"ground_truth", path.string()}});
    std::cout << "aspects: " << gt.n_aspects() << "\nitems: " << gt.n_items() << "\ndim: " << gt.dim() << '\n';
    return 0;
}

int cmd_simulate(Context& c) {
    const auto gt = load_or_generate_truth(c);
    if (c.inputs.contains("noise_level") && !c.spec.noise)
        c.spec.noise = NoiseSpec{c.inputs["noise_level"].get<double>(), derive_seed(c.master_seed, "noise")};
    auto bundles = collect_bundles(gt, c.spec.query, c.spec.answer_seed, c.spec.optim);
    const auto clean_total = total_tuples(bundles);
    if (c.spec.noise) bundles = inject_noise(std::move(bundles), *c.spec.noise);

    const auto path = c.out / "bundles.jsonl";
    write_bundles(path, bundles);
    json outputs = {{"bundles", path.string()}};

    std::vector<std::size_t> per_aspect(gt.n_aspects(), 0);
    std::size_t flipped = 0;
    for (const auto& b : bundles) {
        if (b.source_aspect) per_aspect.at(static_cast<std::size_t>(*b.source_aspect)) += b.tuples.size();
    }
    if (c.spec.noise) flipped = static_cast<std::size_t>(std::llround(c.spec.noise->level * static_cast<double>(clean_total)));

    const auto n_triplets = c.inputs.value("triplet_count", std::size_t{0});
    if (n_triplets > 0) {
        const auto tpath = c.out / "triplets.csv";
        write_triplets(tpath, sample_triplets(gt, n_triplets, derive_seed(c.spec.answer_seed, "triplets")));
        outputs["triplets"] = tpath.string();
    }
    write_manifest(c, "simulate", outputs);

    std::cout << "bundles: " << bundles.size() << '\n';
    for (std::size_t a = 0; a < per_aspect.size(); ++a) std::cout << "tuples aspect " << a << ": " << per_aspect[a] << '\n';
    std::cout << "tuples total: " << total_tuples(bundles) << '\n';
    if (c.spec.noise) std::cout << "tuples flipped: " << flipped << '\n';
    return 0;
}

std::size_t infer_items(std::span<const Bundle> bundles) {
    std::size_t n = 0;
    for (const auto& b : bundles)
        for (auto i : b.items) n = std::max<std::size_t>(n, i + 1);
    return n;
}

int cmd_optimize(Context& c) {
    const auto bundle_path = require_input(c, "bundles", c.out / "bundles.jsonl");
    c.inputs["bundles"] = bundle_path.string();
    const auto bundles = read_bundles(bundle_path);
    std::optional<GroundTruth> truth;
    if (auto p = input_path(c, "truth", c.out / "ground_truth.csv")) {
        c.inputs["truth"] = p->string();
        truth = read_ground_truth(*p);
    }
    OptimConfig cfg = c.spec.optim;
    std::size_t n_items = c.inputs.value("n_items", infer_items(bundles));
    if (truth) {
        cfg.n_embeddings = truth->n_aspects();
        cfg.dim = truth->dim();
        n_items = truth->n_items();
    }
    const auto ndcg_every = c.inputs.value("ndcg_every", std::size_t{1});

    RunSummary run;
    try {
        run = run_optimization(bundles, n_items, cfg, c.spec.mode, truth ? &*truth : nullptr, c.spec.metric, ndcg_every);
    } catch (const OptimizerAbort& e) {
        write_trace(c.out / "trace.csv", e.trace);
        write_embedding(c.out / "embedding_partial.csv", e.state.embedding);
        std::cerr << "optimizer aborted: " << e.what() << " (partial trace written)\n";
        return 2;
    }
    const auto emb = c.out / "embedding.csv", weights = c.out / "weights.csv", trace = c.out / "trace.csv";
    write_embedding(emb, run.result.embedding);
    write_weights(weights, run.result.weights);
    write_trace(trace, run.result.trace);
    write_manifest(c, "optimize", {{"embedding", emb.string()}, {"weights", weights.string()}, {"trace", trace.string()}});

    std::cout << "mode: " << to_string(c.spec.mode) << "\niterations: " << cfg.iterations << '\n';
    if (!run.result.trace.empty())
        std::cout << "final loss: " << format_double(run.result.trace.back().total_loss) << '\n';
    if (run.ndcg) std::cout << "mean ndcg: " << format_double(run.ndcg->mean) << '\n';
    if (run.uncertainty) std::cout << "uncertainty: " << format_double(*run.uncertainty) << '\n';
    return 0;
}

int cmd_evaluate(Context& c) {
    const auto emb_path = require_input(c, "embedding", c.out / "embedding.csv");
    c.inputs["embedding"] = emb_path.string();
    const auto emb = read_embedding(emb_path);

    json report = {{"ndcg", nullptr}, {"uncertainty", nullptr}, {"generalization_error", nullptr},
                   {"aspect_recovery", nullptr}};
    std::optional<NdcgResult> ndcg;
    std::optional<GroundTruth> truth;
    if (auto p = input_path(c, "truth", c.out / "ground_truth.csv")) {
        c.inputs["truth"] = p->string();
        truth = read_ground_truth(*p);
        if (truth->n_aspects() == emb.spaces.size()) {
            ndcg = ndcg_multi(emb, *truth, c.spec.metric);
            report["ndcg"] = {{"mean", ndcg->mean},
                              {"per_space", ndcg->per_space},
                              {"mapping", ndcg->mapping},
                              {"k", c.spec.metric.resolve_k(truth->n_items())}};
        }
    }
    std::optional<AspectWeights> weights;
    if (auto p = input_path(c, "weights", c.out / "weights.csv")) {
        c.inputs["weights"] = p->string();
        weights = read_weights(*p);
        if (weights->cols() == 2) report["uncertainty"] = affiliation_uncertainty(*weights);
    }
    if (c.inputs.contains("triplets")) {
        std::vector<std::string> files;
        if (c.inputs["triplets"].is_string())
            files.push_back(c.inputs["triplets"].get<std::string>());
        else
            files = c.inputs["triplets"].get<std::vector<std::string>>();
        std::vector<double> errs;
        for (const auto& f : files) errs.push_back(generalization_error(read_triplets(f), emb));
        double mean = 0.0, var = 0.0;
        for (double e : errs) mean += e;
        mean /= static_cast<double>(errs.size());
        for (double e : errs) var += (e - mean) * (e - mean);
        const double sd = errs.size() > 1 ? std::sqrt(var / static_cast<double>(errs.size() - 1)) : 0.0;
        report["generalization_error"] = {{"mean", mean}, {"std", sd}, {"per_file", errs}};
    }
    if (ndcg && weights) {
        if (auto p = input_path(c, "bundles", c.out / "bundles.jsonl")) {
            c.inputs["bundles"] = p->string();
            const auto bundles = read_bundles(*p);
            if (weights->rows() == bundles.size()) {
                const auto conf = aspect_confusion(bundles, *weights, ndcg->mapping, truth->n_aspects());
                report["aspect_recovery"] = {{"counts", conf.counts},
                                             {"matched", conf.matched},
                                             {"total", conf.total},
                                             {"recovery_rate", conf.recovery_rate()}};
            }
        }
    }
    const auto path = c.out / "report.json";
    write_json_file(path, report);
    write_manifest(c, "evaluate", {{"report", path.string()}});
    std::cout << report.dump(2) << '\n';
    return 0;
}

int cmd_plot(Context& c, const std::vector<std::string>& cli_inputs) {
    std::vector<std::string> files = cli_inputs;
    if (files.empty() && c.inputs.contains("plot")) files = c.inputs["plot"].get<std::vector<std::string>>();
    if (files.empty()) throw std::runtime_error("plot: no input tables");
    c.inputs["plot"] = files;
    json outputs = json::array();
    for (const auto& f : files) {
        const auto tables = read_embedding(f).spaces;
        for (const auto& p : write_scatter_svgs(tables, c.out, fs::path(f).stem().string())) outputs.push_back(p.string());
    }
    write_manifest(c, "plot", {{"svg", outputs}});
    for (const auto& o : outputs) std::cout << o.get<std::string>() << '\n';
    return 0;
}

HttpServer* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

int cmd_serve(const Globals& g, const std::string& host, int port) {
    json cfg_json = g.config ? read_json_file(*g.config) : json::object();
    auto cfg = server_config_from_json(cfg_json);
    if (g.seed) cfg.seed = *g.seed;
    if (!cfg_json.contains("store_dir")) cfg.store_dir = g.out / "store";
    fs::create_directories(g.out);
    write_json_file(g.out / "serve_manifest.json", to_json(cfg));

    AnnotationService service(cfg);
    HttpServer server(service);
    const int bound = server.bind(host, port);
    if (bound < 0) {
        std::cerr << "cannot bind " << host << ':' << port << '\n';
        return 1;
    }
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "listening on http://" << host << ':' << bound << " (phase " << service.phase() << ", "
              << service.n_bundles() << " bundles)" << std::endl;
    server.listen();
    g_server = nullptr;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bundle-based multi-aspect embedding toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "Master seed; every component seed derives from it");
    app.add_option("--out", g.out, "Output directory")->capture_default_str();
    app.add_option("--config", g.config, "JSON config (an earlier manifest works too)")->check(CLI::ExistingFile);

    std::string preset;
    auto* gen = app.add_subcommand("generate", "Write synthetic ground-truth tables");
    gen->add_option("--preset", preset, "aob, ao or grid-helix");

    std::optional<fs::path> truth, bundles, embedding, weights;
    std::optional<std::size_t> queries, query_size, bins, triplet_count, iterations, ndcg_every, phases;
    std::optional<double> noise;
    std::optional<std::string> strategy, mode;
    std::vector<std::string> triplets, plot_inputs;

    auto* sim = app.add_subcommand("simulate", "Answer random or local queries with k-means");
    sim->add_option("--truth", truth, "Ground-truth table (generated from the config if absent)");
    sim->add_option("--queries", queries, "Queries per aspect");
    sim->add_option("--query-size", query_size, "Items per query");
    sim->add_option("--bins", bins, "Maximum bins per answer");
    sim->add_option("--strategy", strategy, "random or local");
    sim->add_option("--phases", phases, "Local-sampling phases");
    sim->add_option("--noise", noise, "Fraction of tuples to flip")->check(CLI::Range(0.0, 1.0));
    sim->add_option("--triplets", triplet_count, "Also write this many held-out triplets");

    auto* opt = app.add_subcommand("optimize", "Fit a multi-aspect embedding to bundles");
    opt->add_option("--bundles", bundles, "Bundles file");
    opt->add_option("--truth", truth, "Ground truth, for NDCG in the trace");
    opt->add_option("--mode", mode, "bundled or nonbundled");
    opt->add_option("--iterations", iterations, "Optimizer steps");
    opt->add_option("--ndcg-every", ndcg_every, "Trace NDCG every k iterations (0 = final only)");

    auto* eva = app.add_subcommand("evaluate", "NDCG, uncertainty, generalization error, aspect recovery");
    eva->add_option("--embedding", embedding, "Embedding table");
    eva->add_option("--truth", truth, "Ground-truth table");
    eva->add_option("--weights", weights, "Weights table");
    eva->add_option("--bundles", bundles, "Bundles file, for aspect recovery");
    eva->add_option("--triplets", triplets, "Held-out triplet files");

    auto* plt = app.add_subcommand("plot", "Scatter plots coloured by item index");
    plt->add_option("inputs", plot_inputs, "Coordinate tables");

    std::string host = "127.0.0.1";
    int port = 8080;
    auto* srv = app.add_subcommand("serve", "Run the annotation server");
    srv->add_option("--host", host)->capture_default_str();
    srv->add_option("--port", port)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (srv->parsed()) return cmd_serve(g, host, port);
        Context c = resolve(g);
        auto set_path = [&](const char* key, const std::optional<fs::path>& p) {
            if (p) c.inputs[key] = p->string();
        };
        set_path("truth", truth);
        set_path("bundles", bundles);
        set_path("embedding", embedding);
        set_path("weights", weights);
        if (!triplets.empty()) c.inputs["triplets"] = triplets;
        if (triplet_count) c.inputs["triplet_count"] = *triplet_count;
        if (ndcg_every) c.inputs["ndcg_every"] = *ndcg_every;
        if (noise) c.inputs["noise_level"] = *noise;
        if (noise) c.spec.noise = NoiseSpec{*noise, derive_seed(c.master_seed, "noise")};
        if (queries) c.spec.query.n_queries = *queries;
        if (query_size) c.spec.query.query_size = *query_size;
        if (bins) c.spec.query.bin_count = *bins;
        if (phases) c.spec.query.phases = *phases;
        if (strategy) c.spec.query.strategy = parse_strategy(*strategy);
        if (mode) c.spec.mode = parse_mode(*mode);
        if (iterations) c.spec.optim.iterations = *iterations;

        if (gen->parsed()) return cmd_generate(c, preset);
        if (sim->parsed()) return cmd_simulate(c);
        if (opt->parsed()) return cmd_optimize(c);
        if (eva->parsed()) return cmd_evaluate(c);
        if (plt->parsed()) return cmd_plot(c, plot_inputs);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
