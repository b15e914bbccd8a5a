#include "bundlembed/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "bundlembed/experiment.hpp"
#include "bundlembed/rng.hpp"
#include "bundlembed/sampler.hpp"

namespace bundlembed {

using nlohmann::json;

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) {
        cell.erase(0, cell.find_first_not_of(" \t"));
        cell.erase(cell.find_last_not_of(" \t\r") + 1);
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw std::invalid_argument("bad number: '" + s + "'");
    return v;
}

std::uint64_t parse_uint(const std::string& s) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw std::invalid_argument("bad integer: '" + s + "'");
    return v;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return in;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, mode | std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

const char* axis_name(std::size_t k) {
    static const char* names[] = {"x", "y", "z"};
    return k < 3 ? names[k] : nullptr;
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) throw std::runtime_error("format_double failed");
    return {buf, ptr};
}

void write_tables(std::ostream& out, std::span<const CoordTable> tables) {
    if (tables.empty()) throw std::invalid_argument("write_tables: nothing to write");
    const std::size_t dim = tables.front().dim();
    out << "item_id,aspect_id";
    for (std::size_t k = 0; k < dim; ++k) {
        if (axis_name(k))
            out << ',' << axis_name(k);
        else
            out << ",c" << k;
    }
    out << '\n';
    for (std::size_t a = 0; a < tables.size(); ++a) {
        if (tables[a].dim() != dim) throw std::invalid_argument("write_tables: tables differ in dimension");
        for (std::size_t i = 0; i < tables[a].rows(); ++i) {
            out << i << ',' << a;
            for (std::size_t k = 0; k < dim; ++k) out << ',' << format_double(tables[a](i, k));
            out << '\n';
        }
    }
}

std::vector<CoordTable> read_tables(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("coordinate table: missing header");
    const auto header = split_csv(line);
    if (header.size() < 3 || header[0] != "item_id" || header[1] != "aspect_id")
        throw std::invalid_argument("coordinate table: header must start with item_id,aspect_id");
    const std::size_t dim = header.size() - 2;

    std::map<std::size_t, std::map<std::size_t, std::vector<double>>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = split_csv(line);
        if (cells.size() != dim + 2)
            throw std::invalid_argument("coordinate table: wrong column count on line " + std::to_string(line_no));
        std::vector<double> v(dim);
        for (std::size_t k = 0; k < dim; ++k) v[k] = parse_double(cells[k + 2]);
        const auto item = parse_uint(cells[0]);
        const auto aspect = parse_uint(cells[1]);
        if (!rows[aspect].emplace(item, std::move(v)).second)
            throw std::invalid_argument("coordinate table: duplicate row on line " + std::to_string(line_no));
    }
    std::vector<CoordTable> out;
    std::size_t expect_aspect = 0;
    for (const auto& [aspect, items] : rows) {
        if (aspect != expect_aspect++) throw std::invalid_argument("coordinate table: aspect ids not dense");
        CoordTable t(items.size(), dim);
        std::size_t expect_item = 0;
        for (const auto& [item, v] : items) {
            if (item != expect_item++) throw std::invalid_argument("coordinate table: item ids not dense");
            std::copy(v.begin(), v.end(), t.row(item).begin());
        }
        out.push_back(std::move(t));
    }
    return out;
}

void write_ground_truth(const std::filesystem::path& path, const GroundTruth& gt) {
    auto out = open_out(path);
    write_tables(out, gt.aspects);
}

GroundTruth read_ground_truth(const std::filesystem::path& path) {
    auto in = open_in(path);
    GroundTruth gt;
    gt.aspects = read_tables(in);
    gt.validate();
    return gt;
}

void write_embedding(const std::filesystem::path& path, const MultiEmbedding& emb) {
    auto out = open_out(path);
    write_tables(out, emb.spaces);
}

MultiEmbedding read_embedding(const std::filesystem::path& path) {
    auto in = open_in(path);
    MultiEmbedding emb;
    emb.spaces = read_tables(in);
    emb.validate();
    return emb;
}

json bundle_to_json(const Bundle& b) {
    json j;
    j["query_id"] = b.query_id;
    j["items"] = b.items;
    bool derivable = false;
    if (!b.clusters.empty()) {
        j["clusters"] = b.clusters;
        // Tuples in derive_tuples pair order are stored as label flips only.
        const auto derived = derive_tuples(b.items, b.clusters);
        derivable = derived.size() == b.tuples.size();
        for (std::size_t t = 0; derivable && t < derived.size(); ++t)
            derivable = derived[t].i == b.tuples[t].i && derived[t].j == b.tuples[t].j;
        if (derivable) {
            json flips = json::array();
            for (std::size_t t = 0; t < derived.size(); ++t)
                if (derived[t].theta != b.tuples[t].theta) flips.push_back({b.tuples[t].i, b.tuples[t].j});
            if (!flips.empty()) j["flips"] = std::move(flips);
        }
    }
    if (!derivable) {
        json tuples = json::array();
        for (const auto& t : b.tuples) tuples.push_back({t.i, t.j, t.theta});
        j["tuples"] = std::move(tuples);
    }
    if (b.source_aspect) j["source_aspect"] = *b.source_aspect;
    j["phase"] = b.phase;
    return j;
}

Bundle bundle_from_json(const json& j) {
    Bundle b;
    b.query_id = j.at("query_id").get<QueryId>();
    b.items = j.at("items").get<std::vector<ItemIndex>>();
    if (j.contains("source_aspect") && !j["source_aspect"].is_null()) b.source_aspect = j["source_aspect"].get<int>();
    b.phase = j.value("phase", 0);
    if (j.contains("clusters")) b.clusters = j["clusters"].get<Partition>();
    if (j.contains("tuples")) {
        for (const auto& t : j["tuples"])
            b.tuples.push_back({t.at(0).get<ItemIndex>(), t.at(1).get<ItemIndex>(), t.at(2).get<std::uint8_t>()});
    } else {
        if (b.clusters.empty()) throw std::invalid_argument("bundle: needs clusters or tuples");
        b.tuples = derive_tuples(b.items, b.clusters);
        if (j.contains("flips")) {
            std::set<std::pair<ItemIndex, ItemIndex>> flips;
            for (const auto& f : j["flips"]) {
                const auto a = f.at(0).get<ItemIndex>(), c = f.at(1).get<ItemIndex>();
                flips.emplace(std::min(a, c), std::max(a, c));
            }
            std::size_t applied = 0;
            for (auto& t : b.tuples) {
                if (flips.count({t.i, t.j})) {
                    t.theta = static_cast<std::uint8_t>(1 - t.theta);
                    ++applied;
                }
            }
            if (applied != flips.size()) throw std::invalid_argument("bundle: flip references a pair outside the query");
        }
    }
    validate_bundle(b);
    return b;
}

void write_bundles(std::ostream& out, std::span<const Bundle> bundles) {
    for (const auto& b : bundles) out << bundle_to_json(b).dump() << '\n';
}

std::vector<Bundle> read_bundles(std::istream& in) {
    std::vector<Bundle> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(bundle_from_json(json::parse(line)));
        } catch (const std::exception& e) {
            throw std::invalid_argument("bundles line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

void write_bundles(const std::filesystem::path& path, std::span<const Bundle> bundles) {
    auto out = open_out(path);
    write_bundles(out, bundles);
}

void append_bundles(const std::filesystem::path& path, std::span<const Bundle> bundles) {
    auto out = open_out(path, std::ios::app);
    write_bundles(out, bundles);
    out.flush();
}

std::vector<Bundle> read_bundles(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw std::runtime_error("missing bundles file " + path.string());
    auto in = open_in(path);
    return read_bundles(in);
}

void write_weights(std::ostream& out, const AspectWeights& w) {
    out << "row";
    for (std::size_t s = 0; s < w.cols(); ++s) out << ",beta_" << s;
    for (std::size_t s = 0; s < w.cols(); ++s) out << ",alpha_" << s;
    out << '\n';
    for (std::size_t r = 0; r < w.rows(); ++r) {
        out << r;
        for (std::size_t s = 0; s < w.cols(); ++s) out << ',' << format_double(w.beta(r, s));
        for (std::size_t s = 0; s < w.cols(); ++s) out << ',' << format_double(w.alpha(r, s));
        out << '\n';
    }
}

AspectWeights read_weights(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("weights: missing header");
    const auto header = split_csv(line);
    if (header.size() < 3 || header[0] != "row" || (header.size() - 1) % 2 != 0)
        throw std::invalid_argument("weights: bad header");
    const std::size_t cols = (header.size() - 1) / 2;
    std::vector<double> beta;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = split_csv(line);
        if (cells.size() != header.size() || parse_uint(cells[0]) != rows)
            throw std::invalid_argument("weights: malformed row " + std::to_string(rows));
        for (std::size_t s = 0; s < cols; ++s) beta.push_back(parse_double(cells[1 + s]));
        ++rows;
    }
    return AspectWeights::from_beta(rows, cols, std::move(beta));
}

void write_weights(const std::filesystem::path& path, const AspectWeights& w) {
    auto out = open_out(path);
    write_weights(out, w);
}

AspectWeights read_weights(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_weights(in);
}

void write_trace(std::ostream& out, std::span<const TraceRecord> trace) {
    out << "iteration,loss,ndcg,uncertainty\n";
    for (const auto& r : trace) {
        out << r.iteration << ',' << format_double(r.total_loss) << ',';
        if (r.mean_ndcg) out << format_double(*r.mean_ndcg);
        out << ',';
        if (r.uncertainty) out << format_double(*r.uncertainty);
        out << '\n';
    }
}

std::vector<TraceRecord> read_trace(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || split_csv(line).size() != 4) throw std::invalid_argument("trace: bad header");
    std::vector<TraceRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != 4) throw std::invalid_argument("trace: malformed row");
        TraceRecord r;
        r.iteration = parse_uint(cells[0]);
        r.total_loss = parse_double(cells[1]);
        if (!cells[2].empty()) r.mean_ndcg = parse_double(cells[2]);
        if (!cells[3].empty()) r.uncertainty = parse_double(cells[3]);
        out.push_back(r);
    }
    return out;
}

void write_trace(const std::filesystem::path& path, std::span<const TraceRecord> trace) {
    auto out = open_out(path);
    write_trace(out, trace);
}

void write_triplets(const std::filesystem::path& path, std::span<const Triplet> triplets) {
    auto out = open_out(path);
    out << "i,j,k\n";
    for (const auto& t : triplets) out << t.i << ',' << t.j << ',' << t.k << '\n';
}

std::vector<Triplet> read_triplets(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line) || split_csv(line) != std::vector<std::string>{"i", "j", "k"})
        throw std::invalid_argument("triplets: header must be i,j,k");
    std::vector<Triplet> out;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto c = split_csv(line);
        if (c.size() != 3) throw std::invalid_argument("triplets: malformed row");
        out.push_back({static_cast<ItemIndex>(parse_uint(c[0])), static_cast<ItemIndex>(parse_uint(c[1])),
                       static_cast<ItemIndex>(parse_uint(c[2]))});
    }
    return out;
}

json to_json(const QueryConfig& c) {
    return {{"query_size", c.query_size},
            {"bin_count", c.bin_count},
            {"n_queries", c.n_queries},
            {"strategy", to_string(c.strategy)},
            {"phases", c.phases},
            {"seed", c.seed},
            {"aspect_assignment", to_string(c.aspect_assignment)},
            {"neighborhood_factor", c.neighborhood_factor}};
}

QueryConfig query_config_from_json(const json& j, const QueryConfig& d) {
    QueryConfig c = d;
    c.query_size = j.value("query_size", d.query_size);
    c.bin_count = j.value("bin_count", d.bin_count);
    c.n_queries = j.value("n_queries", d.n_queries);
    if (j.contains("strategy")) c.strategy = parse_strategy(j["strategy"].get<std::string>());
    c.phases = j.value("phases", d.phases);
    c.seed = j.value("seed", d.seed);
    if (j.contains("aspect_assignment")) c.aspect_assignment = parse_assignment(j["aspect_assignment"].get<std::string>());
    c.neighborhood_factor = j.value("neighborhood_factor", d.neighborhood_factor);
    return c;
}

json to_json(const OptimConfig& c) {
    return {{"n_embeddings", c.n_embeddings},
            {"dim", c.dim},
            {"margin", c.margin},
            {"learning_rate", c.learning_rate},
            {"iterations", c.iterations},
            {"seed", c.seed},
            {"init_scale", c.init_scale},
            {"adam_beta1", c.beta1},
            {"adam_beta2", c.beta2},
            {"adam_epsilon", c.epsilon},
            {"batch_size", c.batch_size},
            {"normalize_bundle_loss", c.normalize_bundle_loss}};
}

OptimConfig optim_config_from_json(const json& j, const OptimConfig& d) {
    OptimConfig c = d;
    c.n_embeddings = j.value("n_embeddings", d.n_embeddings);
    c.dim = j.value("dim", d.dim);
    c.margin = j.value("margin", d.margin);
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.iterations = j.value("iterations", d.iterations);
    c.seed = j.value("seed", d.seed);
    c.init_scale = j.value("init_scale", d.init_scale);
    c.beta1 = j.value("adam_beta1", d.beta1);
    c.beta2 = j.value("adam_beta2", d.beta2);
    c.epsilon = j.value("adam_epsilon", d.epsilon);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.normalize_bundle_loss = j.value("normalize_bundle_loss", d.normalize_bundle_loss);
    return c;
}

json to_json(const MetricConfig& c) {
    json j = {{"k_fraction", c.k_fraction}};
    j["k_override"] = c.k_override ? json(*c.k_override) : json(nullptr);
    return j;
}

MetricConfig metric_config_from_json(const json& j, const MetricConfig& d) {
    MetricConfig c = d;
    c.k_fraction = j.value("k_fraction", d.k_fraction);
    if (j.contains("k_override") && !j["k_override"].is_null()) c.k_override = j["k_override"].get<std::size_t>();
    return c;
}

json to_json(const ShapeSpec& s) {
    json j = {{"shape", to_string(s.shape)}, {"n_points", s.n_points}, {"index_order", to_string(s.index_order)}};
    if (s.skeleton_path) j["skeleton_path"] = s.skeleton_path->string();
    return j;
}

ShapeSpec shape_spec_from_json(const json& j) {
    ShapeSpec s;
    s.shape = parse_shape(j.at("shape").get<std::string>());
    s.n_points = j.value("n_points", s.n_points);
    if (j.contains("index_order")) s.index_order = parse_index_order(j["index_order"].get<std::string>());
    if (j.contains("skeleton_path")) s.skeleton_path = j["skeleton_path"].get<std::string>();
    return s;
}

json to_json(const ExperimentSpec& s) {
    json shapes = json::array();
    for (const auto& sh : s.shapes) shapes.push_back(to_json(sh));
    json j;
    j["ground_truth"] = s.ground_truth_file ? json(s.ground_truth_file->string()) : shapes;
    j["ground_truth_seed"] = s.ground_truth_seed;
    j["query_config"] = to_json(s.query);
    j["answer_seed"] = s.answer_seed;
    j["optim_config"] = to_json(s.optim);
    j["mode"] = to_string(s.mode);
    j["noise"] = s.noise ? json{{"level", s.noise->level}, {"seed", s.noise->seed}} : json(nullptr);
    j["metric_config"] = to_json(s.metric);
    j["output_dir"] = s.output_dir.string();
    return j;
}

ExperimentSpec experiment_spec_from_json(const json& j) {
    ExperimentSpec s;
    if (j.contains("seed")) s.seed_all(j["seed"].get<std::uint64_t>());
    if (j.contains("ground_truth")) {
        const auto& gt = j["ground_truth"];
        if (gt.is_string())
            s.ground_truth_file = gt.get<std::string>();
        else
            for (const auto& sh : gt) s.shapes.push_back(shape_spec_from_json(sh));
    }
    s.ground_truth_seed = j.value("ground_truth_seed", s.ground_truth_seed);
    if (j.contains("query_config")) s.query = query_config_from_json(j["query_config"], s.query);
    s.answer_seed = j.value("answer_seed", s.answer_seed);
    if (j.contains("optim_config")) s.optim = optim_config_from_json(j["optim_config"], s.optim);
    if (j.contains("mode")) s.mode = parse_mode(j["mode"].get<std::string>());
    if (j.contains("noise") && !j["noise"].is_null()) {
        NoiseSpec n;
        n.level = j["noise"].value("level", 0.0);
        const std::uint64_t derived = j.contains("seed") ? derive_seed(j["seed"].get<std::uint64_t>(), "noise") : 0;
        n.seed = j["noise"].value("seed", derived);
        s.noise = n;
    }
    if (j.contains("metric_config")) s.metric = metric_config_from_json(j["metric_config"], s.metric);
    if (j.contains("output_dir")) s.output_dir = j["output_dir"].get<std::string>();
    return s;
}

json read_json_file(const std::filesystem::path& path) {
    auto in = open_in(path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

std::string read_text_file(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace bundlembed
