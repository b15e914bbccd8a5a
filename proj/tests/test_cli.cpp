#include "doctest.h"

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "json.hpp"

#include "bundlembed/io.hpp"

using namespace bundlembed;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

// Runs the CLI inside `dir` and captures stdout and stderr.
Run cli(const fs::path& dir, const std::string& args) {
    const std::string cmd = "cd '" + dir.string() + "' && '" BUNDLEMBED_CLI "' " + args + " 2>&1";
    Run r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buf{};
    while (auto n = std::fread(buf.data(), 1, buf.size(), pipe)) r.out.append(buf.data(), n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

fs::path temp_dir(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("bundlembed_test_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t line_count(const fs::path& p) {
    const auto s = slurp(p);
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

std::set<std::string> keys(const json& j) {
    std::set<std::string> out;
    for (auto it = j.begin(); it != j.end(); ++it) out.insert(it.key());
    return out;
}

}  // namespace

TEST_CASE("generate presets") {
    const auto d = temp_dir("generate");
    auto r = cli(d, "--seed 1 --out aob generate --preset aob");
    REQUIRE(r.code == 0);
    const auto aob = read_ground_truth(d / "aob/ground_truth.csv");
    CHECK(aob.n_aspects() == 3);
    CHECK(aob.n_items() == 214);

    r = cli(d, "--seed 1 --out gh generate --preset grid-helix");
    REQUIRE(r.code == 0);
    const auto gh = read_ground_truth(d / "gh/ground_truth.csv");
    CHECK(gh.n_aspects() == 2);
    CHECK(gh.n_items() == 1600);
    CHECK(gh.dim() == 3);

    CHECK(cli(d, "generate --preset nonsense").code != 0);
}

TEST_CASE("rerunning from a manifest reproduces outputs byte for byte") {
    const auto d = temp_dir("manifest");
    REQUIRE(cli(d, "--seed 7 --out a generate --preset ao").code == 0);
    REQUIRE(cli(d, "--seed 7 --out a simulate --truth a/ground_truth.csv --queries 40 --noise 0.1 --triplets 50").code == 0);
    REQUIRE(cli(d, "--config a/generate_manifest.json --out b generate").code == 0);
    CHECK(slurp(d / "a/ground_truth.csv") == slurp(d / "b/ground_truth.csv"));
    REQUIRE(cli(d, "--config a/simulate_manifest.json --out b simulate").code == 0);
    CHECK(slurp(d / "a/bundles.jsonl") == slurp(d / "b/bundles.jsonl"));
    CHECK(slurp(d / "a/triplets.csv") == slurp(d / "b/triplets.csv"));

    const auto m = read_json_file(d / "a/simulate_manifest.json");
    for (const char* k : {"ground_truth_seed", "answer_seed", "seed"}) CHECK(m.contains(k));
    CHECK(m["noise"]["seed"].is_number());
    CHECK(m["query_config"]["seed"].is_number());
    CHECK(m["optim_config"]["seed"].is_number());
}

TEST_CASE("simulate reports the reference tuple counts") {
    const auto d = temp_dir("counts");
    REQUIRE(cli(d, "--seed 2 --out g generate --preset ao").code == 0);
    auto r = cli(d, "--seed 2 --out n20 simulate --truth g/ground_truth.csv --queries 600 --query-size 20 --bins 5");
    REQUIRE(r.code == 0);
    CHECK(r.out.find("tuples total: 228000") != std::string::npos);
    CHECK(r.out.find("tuples aspect 0: 114000") != std::string::npos);

    r = cli(d, "--seed 2 --out n10 simulate --truth g/ground_truth.csv --queries 300 --query-size 10 --bins 2");
    REQUIRE(r.code == 0);
    CHECK(read_bundles(d / "n10/bundles.jsonl").size() == 600);
    CHECK(r.out.find("tuples total: 27000") != std::string::npos);
}

TEST_CASE("noise flips exactly the requested fraction") {
    const auto d = temp_dir("noise");
    REQUIRE(cli(d, "--seed 5 --out clean simulate --queries 60").code == 0);
    REQUIRE(cli(d, "--seed 5 --out noisy simulate --queries 60 --noise 0.2").code == 0);
    const auto a = read_bundles(d / "clean/bundles.jsonl");
    const auto b = read_bundles(d / "noisy/bundles.jsonl");
    REQUIRE(a.size() == b.size());
    std::size_t flipped = 0, total = 0;
    for (std::size_t q = 0; q < a.size(); ++q) {
        REQUIRE(a[q].items == b[q].items);
        for (std::size_t t = 0; t < a[q].tuples.size(); ++t) {
            flipped += a[q].tuples[t].theta != b[q].tuples[t].theta;
            ++total;
        }
    }
    // Default shapes: three aspects, 60 queries each, 190 tuples per query.
    CHECK(total == 34200);
    CHECK(flipped == 6840);
}

TEST_CASE("optimize, evaluate and plot") {
    const auto d = temp_dir("pipeline");
    REQUIRE(cli(d, "--seed 3 --out g generate --preset ao").code == 0);
    REQUIRE(cli(d, "--seed 3 --out s simulate --truth g/ground_truth.csv --queries 40 --triplets 300").code == 0);

    auto r = cli(d, "--seed 3 --out o optimize --bundles s/bundles.jsonl --truth g/ground_truth.csv");
    REQUIRE(r.code == 0);
    CHECK(line_count(d / "o/trace.csv") == 101);
    const auto bundles = read_bundles(d / "s/bundles.jsonl");
    CHECK(read_weights(d / "o/weights.csv").rows() == bundles.size());

    r = cli(d, "--seed 3 --out nb optimize --bundles s/bundles.jsonl --mode nonbundled --iterations 5");
    REQUIRE(r.code == 0);
    CHECK(read_weights(d / "nb/weights.csv").rows() == total_tuples(bundles));
    CHECK(line_count(d / "nb/trace.csv") == 6);

    r = cli(d, "--out self evaluate --embedding g/ground_truth.csv --truth g/ground_truth.csv");
    REQUIRE(r.code == 0);
    const auto self = read_json_file(d / "self/report.json");
    CHECK(self["ndcg"]["mean"].get<double>() == 1.0);
    CHECK(self["uncertainty"].is_null());
    CHECK(self["generalization_error"].is_null());

    const std::string eval = " evaluate --embedding o/embedding.csv --truth g/ground_truth.csv --weights o/weights.csv "
                             "--bundles s/bundles.jsonl --triplets s/triplets.csv";
    REQUIRE(cli(d, "--out e1" + eval).code == 0);
    const auto rep = read_json_file(d / "e1/report.json");
    const auto& counts = rep["aspect_recovery"]["counts"];
    REQUIRE(counts.size() == 2);
    for (const auto& row : counts) CHECK(row[0].get<std::size_t>() + row[1].get<std::size_t>() == 40);
    CHECK(rep["uncertainty"].is_number());
    CHECK(rep["generalization_error"]["mean"].is_number());

    REQUIRE(cli(d, "--seed 4 --out o2 optimize --bundles s/bundles.jsonl --iterations 10").code == 0);
    REQUIRE(cli(d, "--out e2 evaluate --embedding o2/embedding.csv --truth g/ground_truth.csv --weights o2/weights.csv "
                   "--bundles s/bundles.jsonl --triplets s/triplets.csv")
                .code == 0);
    const auto rep2 = read_json_file(d / "e2/report.json");
    CHECK(rep2 != rep);
    CHECK(keys(rep2) == keys(rep));
    CHECK(keys(rep2["ndcg"]) == keys(rep["ndcg"]));

    REQUIRE(cli(d, "--out p1 plot g/ground_truth.csv").code == 0);
    REQUIRE(cli(d, "--out p2 plot g/ground_truth.csv").code == 0);
    CHECK(fs::exists(d / "p1/ground_truth_0.svg"));
    CHECK(fs::exists(d / "p1/ground_truth_1.svg"));
    CHECK(slurp(d / "p1/ground_truth_0.svg") == slurp(d / "p2/ground_truth_0.svg"));
}

TEST_CASE("error paths") {
    const auto d = temp_dir("errors");
    CHECK(cli(d, "evaluate --truth missing.csv").code != 0);
    CHECK(cli(d, "optimize").code != 0);
    CHECK(cli(d, "frobnicate").code != 0);

    {
        std::ofstream(d / "empty.csv") << "item_id,aspect_id,x,y\n";
    }
    CHECK(cli(d, "--out p plot empty.csv").code != 0);
    CHECK_FALSE(fs::exists(d / "p/empty_0.svg"));

    {
        std::ofstream out(d / "wide.csv");
        out << "item_id,aspect_id,x,y,z,w\n0,0,1,2,3,4\n1,0,1,2,3,5\n";
    }
    CHECK(cli(d, "--out p plot wide.csv").code != 0);

    REQUIRE(cli(d, "--seed 1 --out s simulate --queries 5").code == 0);
    {
        std::ofstream(d / "hot.json") << R"({"optim_config": {"learning_rate": 1e306}})";
    }
    const auto r = cli(d, "--config hot.json --out o optimize --bundles s/bundles.jsonl");
    CHECK(r.code == 2);
    CHECK(fs::exists(d / "o/trace.csv"));
    CHECK(fs::exists(d / "o/embedding_partial.csv"));
}
