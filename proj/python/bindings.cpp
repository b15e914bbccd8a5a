#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bundlembed/experiment.hpp"
#include "bundlembed/io.hpp"
#include "bundlembed/metrics.hpp"
#include "bundlembed/optimizer.hpp"
#include "bundlembed/rng.hpp"
#include "bundlembed/sampler.hpp"
#include "bundlembed/synthgen.hpp"

namespace py = pybind11;
using namespace bundlembed;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(const CoordTable& t) {
    Array a({t.rows(), t.dim()});
    std::copy(t.data().begin(), t.data().end(), a.mutable_data());
    return a;
}

CoordTable from_array(const Array& a) {
    if (a.ndim() != 2) throw std::invalid_argument("expected a 2D array of shape (n_items, dim)");
    const auto rows = static_cast<std::size_t>(a.shape(0)), dim = static_cast<std::size_t>(a.shape(1));
    return CoordTable(rows, dim, std::vector<double>(a.data(), a.data() + rows * dim));
}

std::vector<Array> to_arrays(std::span<const CoordTable> tables) {
    std::vector<Array> out;
    for (const auto& t : tables) out.push_back(to_array(t));
    return out;
}

std::vector<CoordTable> from_arrays(const std::vector<Array>& arrays) {
    std::vector<CoordTable> out;
    for (const auto& a : arrays) out.push_back(from_array(a));
    return out;
}

Array matrix(std::size_t rows, std::size_t cols, const std::vector<double>& v) {
    Array a({rows, cols});
    std::copy(v.begin(), v.end(), a.mutable_data());
    return a;
}

std::vector<Triplet> triplets_from(const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2 || a.shape(1) != 3) throw std::invalid_argument("expected an integer array of shape (n, 3)");
    std::vector<Triplet> out;
    const auto* p = a.data();
    for (py::ssize_t r = 0; r < a.shape(0); ++r, p += 3) {
        if (p[0] < 0 || p[1] < 0 || p[2] < 0) throw std::invalid_argument("negative item index");
        out.push_back({static_cast<ItemIndex>(p[0]), static_cast<ItemIndex>(p[1]), static_cast<ItemIndex>(p[2])});
    }
    return out;
}

std::vector<ShapeSpec> preset(const std::string& name, std::size_t n_points) {
    if (name == "aob") return aob_shapes(n_points);
    if (name == "ao") return ao_shapes(n_points);
    if (name == "grid-helix")
        return {{Shape::grid_3d, n_points, IndexOrder::sequential, {}}, {Shape::helix_3d, n_points, IndexOrder::sequential, {}}};
    throw std::invalid_argument("unknown preset " + name + " (expected aob, ao or grid-helix)");
}

}  // namespace

PYBIND11_MODULE(_bundlembed, m) {
    m.doc() = "Bundle optimization for multi-aspect embeddings";

    py::class_<Tuple>(m, "Tuple")
        .def_readonly("i", &Tuple::i)
        .def_readonly("j", &Tuple::j)
        .def_readonly("theta", &Tuple::theta)
        .def("__repr__", [](const Tuple& t) {
            return "Tuple(" + std::to_string(t.i) + ", " + std::to_string(t.j) + ", " + std::to_string(t.theta) + ")";
        });

    py::class_<Bundle>(m, "Bundle")
        .def(py::init([](QueryId id, std::vector<ItemIndex> items, Partition clusters, std::optional<int> aspect,
                         int phase) { return make_bundle(id, std::move(items), std::move(clusters), aspect, phase); }),
             py::arg("query_id"), py::arg("items"), py::arg("clusters"), py::arg("source_aspect") = py::none(),
             py::arg("phase") = 0)
        .def_readonly("query_id", &Bundle::query_id)
        .def_readonly("items", &Bundle::items)
        .def_readonly("clusters", &Bundle::clusters)
        .def_readonly("tuples", &Bundle::tuples)
        .def_readonly("source_aspect", &Bundle::source_aspect)
        .def_readonly("phase", &Bundle::phase)
        .def("__eq__", [](const Bundle& a, const Bundle& b) { return a == b; });

    py::class_<OptimConfig>(m, "OptimConfig")
        .def(py::init<>())
        .def_readwrite("n_embeddings", &OptimConfig::n_embeddings)
        .def_readwrite("dim", &OptimConfig::dim)
        .def_readwrite("margin", &OptimConfig::margin)
        .def_readwrite("learning_rate", &OptimConfig::learning_rate)
        .def_readwrite("iterations", &OptimConfig::iterations)
        .def_readwrite("seed", &OptimConfig::seed)
        .def_readwrite("init_scale", &OptimConfig::init_scale)
        .def_readwrite("batch_size", &OptimConfig::batch_size)
        .def_readwrite("normalize_bundle_loss", &OptimConfig::normalize_bundle_loss);

    py::class_<AspectWeights>(m, "Weights")
        .def_static(
            "from_beta",
            [](const Array& beta) {
                if (beta.ndim() != 2) throw std::invalid_argument("expected a 2D beta array");
                const auto r = static_cast<std::size_t>(beta.shape(0)), c = static_cast<std::size_t>(beta.shape(1));
                return AspectWeights::from_beta(r, c, std::vector<double>(beta.data(), beta.data() + r * c));
            },
            py::arg("beta"))
        .def_property_readonly("alpha", [](const AspectWeights& w) { return matrix(w.rows(), w.cols(), w.alpha()); })
        .def_property_readonly("beta", [](const AspectWeights& w) { return matrix(w.rows(), w.cols(), w.beta()); });

    py::class_<OptimResult>(m, "OptimResult")
        .def_property_readonly("embedding", [](const OptimResult& r) { return to_arrays(r.embedding.spaces); })
        .def_readonly("weights", &OptimResult::weights)
        .def_property_readonly("loss", [](const OptimResult& r) {
            std::vector<double> out;
            for (const auto& t : r.trace) out.push_back(t.total_loss);
            return out;
        });

    m.def(
        "generate",
        [](const std::string& name, std::uint64_t seed, std::size_t n_points) {
            ExperimentSpec spec;
            spec.seed_all(seed);
            return to_arrays(generate_ground_truth(preset(name, n_points), spec.ground_truth_seed).aspects);
        },
        py::arg("preset") = "aob", py::arg("seed") = 0, py::arg("n_points") = 214,
        "Synthetic ground truth as one (n_items, dim) array per aspect.");

    m.def(
        "simulate",
        [](const std::vector<Array>& truth, std::size_t n_queries, std::size_t query_size, std::size_t bin_count,
           std::uint64_t seed, const std::string& strategy, std::size_t phases, double noise) {
            GroundTruth gt;
            gt.aspects = from_arrays(truth);
            gt.validate();
            ExperimentSpec spec;
            spec.noise = NoiseSpec{noise, 0};
            spec.seed_all(seed);
            spec.query.n_queries = n_queries;
            spec.query.query_size = query_size;
            spec.query.bin_count = bin_count;
            spec.query.strategy = parse_strategy(strategy);
            spec.query.phases = phases;
            OptimConfig cfg = spec.optim;
            cfg.n_embeddings = gt.n_aspects();
            cfg.dim = gt.dim();
            auto bundles = collect_bundles(gt, spec.query, spec.answer_seed, cfg);
            if (noise > 0.0) bundles = inject_noise(std::move(bundles), *spec.noise);
            return bundles;
        },
        py::arg("truth"), py::arg("n_queries") = 600, py::arg("query_size") = 20, py::arg("bin_count") = 5,
        py::arg("seed") = 0, py::arg("strategy") = "random", py::arg("phases") = 1, py::arg("noise") = 0.0,
        "Simulated k-means answers, n_queries per aspect.");

    m.def(
        "bundles_from_triplets",
        [](const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& t) {
            const auto trips = triplets_from(t);
            return triplets_to_tuples(trips);
        },
        py::arg("triplets"));

    m.def("total_tuples", [](const std::vector<Bundle>& b) { return total_tuples(b); }, py::arg("bundles"));

    m.def(
        "optimize",
        [](const std::vector<Bundle>& bundles, std::size_t n_items, const OptimConfig& cfg, const std::string& mode) {
            const Mode md = parse_mode(mode);
            py::gil_scoped_release release;
            return optimize(bundles, n_items, cfg, md);
        },
        py::arg("bundles"), py::arg("n_items"), py::arg("config") = OptimConfig{}, py::arg("mode") = "bundled");

    m.def(
        "ndcg",
        [](const std::vector<Array>& recovered, const std::vector<Array>& truth, double k_fraction) {
            GroundTruth gt;
            gt.aspects = from_arrays(truth);
            MetricConfig mc;
            mc.k_fraction = k_fraction;
            mc.validate();
            const auto r = ndcg_multi(MultiEmbedding{from_arrays(recovered)}, gt, mc);
            py::dict d;
            d["mean"] = r.mean;
            d["mapping"] = r.mapping;
            d["per_space"] = r.per_space;
            return d;
        },
        py::arg("recovered"), py::arg("truth"), py::arg("k_fraction") = 0.1,
        "Best-mapping mean NDCG of recovered spaces against truth aspects.");

    m.def(
        "affiliation_uncertainty",
        [](const AspectWeights& w, bool allow_top2) { return affiliation_uncertainty(w, allow_top2); },
        py::arg("weights"), py::arg("allow_top2") = false);

    m.def(
        "generalization_error",
        [](const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& triplets,
           const std::vector<Array>& embedding) {
            const auto trips = triplets_from(triplets);
            return generalization_error(trips, MultiEmbedding{from_arrays(embedding)});
        },
        py::arg("triplets"), py::arg("embedding"));

    m.def(
        "sample_triplets",
        [](const std::vector<Array>& truth, std::size_t count, std::uint64_t seed) {
            GroundTruth gt;
            gt.aspects = from_arrays(truth);
            const auto trips = sample_triplets(gt, count, seed);
            py::array_t<std::int64_t> out({trips.size(), std::size_t{3}});
            auto* p = out.mutable_data();
            for (const auto& t : trips) {
                *p++ = t.i;
                *p++ = t.j;
                *p++ = t.k;
            }
            return out;
        },
        py::arg("truth"), py::arg("count"), py::arg("seed") = 0);

    m.def("read_tables", [](const std::string& path) { return to_arrays(read_ground_truth(path).aspects); }, py::arg("path"));
    m.def(
        "write_tables",
        [](const std::string& path, const std::vector<Array>& tables) {
            write_embedding(path, MultiEmbedding{from_arrays(tables)});
        },
        py::arg("path"), py::arg("tables"));
    m.def("read_bundles", [](const std::string& path) { return read_bundles(std::filesystem::path(path)); }, py::arg("path"));
    m.def(
        "write_bundles",
        [](const std::string& path, const std::vector<Bundle>& bundles) {
            write_bundles(std::filesystem::path(path), std::span<const Bundle>(bundles));
        },
        py::arg("path"), py::arg("bundles"));
}
