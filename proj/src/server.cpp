#include "bundlembed/server.hpp"

#include <algorithm>
#include <condition_variable>
#include <cstdio>
#include <fstream>
#include <set>

#include "httplib.h"

#include "bundlembed/io.hpp"
#include "bundlembed/optimizer.hpp"
#include "bundlembed/rng.hpp"

namespace bundlembed {

using nlohmann::json;

void ProtocolConfig::validate() const {
    if (queries_per_session == 0) throw std::invalid_argument("queries_per_session must be positive");
    if (sentinels_per_session >= queries_per_session)
        throw std::invalid_argument("sentinels_per_session must be below queries_per_session");
    if (!(sentinel_threshold > 0.0 && sentinel_threshold <= 1.0))
        throw std::invalid_argument("sentinel_threshold must lie in (0, 1]");
    if (query_size < 2) throw std::invalid_argument("query_size must be at least 2");
    if (bin_count < 1 || bin_count > query_size) throw std::invalid_argument("bin_count must lie in [1, query_size]");
}

namespace {

// Non-empty bins, each sorted, bins ordered by first element.
Partition canonical(const Partition& p) {
    Partition out;
    for (const auto& bin : p) {
        if (bin.empty()) continue;
        auto b = bin;
        std::sort(b.begin(), b.end());
        out.push_back(std::move(b));
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string hex16(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void check_sentinel(const Sentinel& s, const ServerConfig& c, std::size_t idx) {
    const std::string where = "sentinel " + std::to_string(idx) + ": ";
    if (s.items.size() != c.protocol.query_size)
        throw std::invalid_argument(where + "item count differs from query_size");
    for (auto i : s.items)
        if (i >= c.n_items) throw std::invalid_argument(where + "item out of range");
    if (!is_partition_of(s.items, s.clusters)) throw std::invalid_argument(where + "clusters do not partition items");
    if (canonical(s.clusters).size() > c.protocol.bin_count) throw std::invalid_argument(where + "too many bins");
}

}  // namespace

bool same_partition(const Partition& a, const Partition& b) { return canonical(a) == canonical(b); }

void ServerConfig::validate() const {
    protocol.validate();
    if (n_items < protocol.query_size) throw std::invalid_argument("n_items smaller than query_size");
    if (protocol.sentinels_per_session > 0 && sentinels.empty())
        throw std::invalid_argument("sentinels_per_session > 0 but no sentinels configured");
    for (std::size_t i = 0; i < sentinels.size(); ++i) check_sentinel(sentinels[i], *this, i);
    optim.validate();
}

ServerConfig server_config_from_json(const json& j) {
    ServerConfig c;
    if (j.contains("protocol")) {
        const auto& p = j["protocol"];
        c.protocol.queries_per_session = p.value("queries_per_session", c.protocol.queries_per_session);
        c.protocol.sentinels_per_session = p.value("sentinels_per_session", c.protocol.sentinels_per_session);
        c.protocol.sentinel_threshold = p.value("sentinel_threshold", c.protocol.sentinel_threshold);
        c.protocol.query_size = p.value("query_size", c.protocol.query_size);
        c.protocol.bin_count = p.value("bin_count", c.protocol.bin_count);
    }
    if (j.contains("ground_truth")) c.n_items = read_ground_truth(j["ground_truth"].get<std::string>()).n_items();
    c.n_items = j.value("n_items", c.n_items);
    c.seed = j.value("seed", c.seed);
    if (j.contains("store_dir")) c.store_dir = j["store_dir"].get<std::string>();
    if (j.contains("image_dir") && !j["image_dir"].is_null()) c.image_dir = j["image_dir"].get<std::string>();
    if (j.contains("optim_config")) c.optim = optim_config_from_json(j["optim_config"], c.optim);
    c.neighborhood_factor = j.value("neighborhood_factor", c.neighborhood_factor);
    if (j.contains("intro")) c.intro = j["intro"];
    for (const auto& s : j.value("sentinels", json::array()))
        c.sentinels.push_back({s.at("items").get<std::vector<ItemIndex>>(), s.at("clusters").get<Partition>()});
    return c;
}

json to_json(const ServerConfig& c) {
    json sentinels = json::array();
    for (const auto& s : c.sentinels) sentinels.push_back({{"items", s.items}, {"clusters", s.clusters}});
    return {
        {"protocol",
         {{"queries_per_session", c.protocol.queries_per_session},
          {"sentinels_per_session", c.protocol.sentinels_per_session},
          {"sentinel_threshold", c.protocol.sentinel_threshold},
          {"query_size", c.protocol.query_size},
          {"bin_count", c.protocol.bin_count}}},
        {"n_items", c.n_items},
        {"seed", c.seed},
        {"store_dir", c.store_dir.string()},
        {"image_dir", c.image_dir ? json(c.image_dir->string()) : json(nullptr)},
        {"optim_config", to_json(c.optim)},
        {"neighborhood_factor", c.neighborhood_factor},
        {"intro", c.intro},
        {"sentinels", sentinels},
    };
}

std::string to_string(SessionStatus s) {
    switch (s) {
        case SessionStatus::active: return "active";
        case SessionStatus::accepted: return "accepted";
        case SessionStatus::rejected: return "rejected";
    }
    return "unknown";
}

AnnotationService::AnnotationService(ServerConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    state_ = SamplingState(SamplingStrategy::local, std::nullopt, 0, cfg_.neighborhood_factor);
    std::filesystem::create_directories(cfg_.store_dir);
    replay();
}

void AnnotationService::log_event(const json& event) {
    std::ofstream out(cfg_.store_dir / "sessions.jsonl", std::ios::app | std::ios::binary);
    if (!out) throw std::runtime_error("cannot append to session log");
    out << event.dump() << '\n';
    out.flush();
}

void AnnotationService::replay() {
    const auto bundle_path = cfg_.store_dir / "bundles.jsonl";
    if (std::filesystem::exists(bundle_path)) bundles_ = read_bundles(bundle_path);
    const auto log_path = cfg_.store_dir / "sessions.jsonl";
    if (!std::filesystem::exists(log_path)) return;

    std::ifstream in(log_path, std::ios::binary);
    std::string line;
    std::size_t accepted_bundles = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto ev = json::parse(line);
        const auto kind = ev.at("event").get<std::string>();
        if (kind == "start") {
            Session s;
            s.id = ev.at("session_id").get<std::string>();
            s.worker_id = ev.at("worker_id").get<std::string>();
            s.ordinal = ev.at("ordinal").get<std::uint64_t>();
            s.phase = ev.at("phase").get<int>();
            for (const auto& q : ev.at("queries")) {
                AssignedQuery aq;
                aq.query_id = q.at("query_id").get<QueryId>();
                aq.items = q.at("items").get<std::vector<ItemIndex>>();
                if (!q.at("sentinel").is_null()) aq.sentinel = q.at("sentinel").get<std::size_t>();
                s.queries.push_back(std::move(aq));
            }
            next_ordinal_ = std::max(next_ordinal_, s.ordinal + 1);
            sessions_[s.id] = std::move(s);
        } else if (kind == "answer") {
            auto& s = find_session(ev.at("session_id").get<std::string>());
            s.answers[ev.at("query_id").get<QueryId>()] = ev.at("bins").get<Partition>();
        } else if (kind == "finalize") {
            auto& s = find_session(ev.at("session_id").get<std::string>());
            const auto r = finalize_locked(s, false);
            if (to_string(r.status) != ev.at("status").get<std::string>())
                throw std::runtime_error("session log replay disagrees on status of " + s.id);
            accepted_bundles += r.n_bundles;
        } else if (kind == "advance") {
            const auto n = ev.at("n_bundles").get<std::size_t>();
            if (n > bundles_.size()) throw std::runtime_error("session log refers to missing bundles");
            auto res = optimize(std::span<const Bundle>(bundles_.data(), n), cfg_.n_items, cfg_.optim, Mode::bundled);
            state_ = SamplingState(SamplingStrategy::local, std::move(res.embedding), ev.at("phase").get<int>(),
                                   cfg_.neighborhood_factor);
            accepted_since_advance_ = 0;
        } else {
            throw std::runtime_error("unknown session log event " + kind);
        }
    }
    if (accepted_bundles != bundles_.size())
        throw std::runtime_error("bundle store and session log disagree on bundle count");
}

Session& AnnotationService::find_session(const std::string& id) {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ServiceError(404, "unknown session " + id);
    return it->second;
}

Session AnnotationService::start_session(const std::string& worker_id) {
    if (worker_id.empty()) throw ServiceError(400, "worker_id required");
    std::lock_guard lock(mutex_);
    const auto& p = cfg_.protocol;
    Session s;
    s.ordinal = next_ordinal_;
    s.id = hex16(derive_seed(derive_seed(cfg_.seed, "session-id"), s.ordinal));
    s.worker_id = worker_id;
    s.phase = state_.phase;

    Rng rng(derive_seed(derive_seed(derive_seed(cfg_.seed, "session"), worker_id), s.ordinal));
    const auto sentinel_slots = rng.sample_without_replacement(p.queries_per_session, p.sentinels_per_session);
    std::vector<std::size_t> picks;
    if (cfg_.sentinels.size() >= p.sentinels_per_session) {
        picks = rng.sample_without_replacement(cfg_.sentinels.size(), p.sentinels_per_session);
    } else {
        for (std::size_t i = 0; i < p.sentinels_per_session; ++i) picks.push_back(rng.uniform_index(cfg_.sentinels.size()));
    }
    s.queries.resize(p.queries_per_session);
    for (std::size_t k = 0; k < sentinel_slots.size(); ++k) {
        auto& q = s.queries[sentinel_slots[k]];
        q.sentinel = picks[k];
        q.items = cfg_.sentinels[picks[k]].items;
    }
    for (std::size_t pos = 0; pos < s.queries.size(); ++pos) {
        auto& q = s.queries[pos];
        q.query_id = s.ordinal * p.queries_per_session + pos;
        if (!q.sentinel) q.items = sample_local(state_, cfg_.n_items, p.query_size, rng).items;
        rng.shuffle(q.items);
    }

    json queries = json::array();
    for (const auto& q : s.queries)
        queries.push_back({{"query_id", q.query_id},
                           {"items", q.items},
                           {"sentinel", q.sentinel ? json(*q.sentinel) : json(nullptr)}});
    log_event({{"event", "start"},
               {"session_id", s.id},
               {"worker_id", worker_id},
               {"ordinal", s.ordinal},
               {"phase", s.phase},
               {"queries", queries}});
    ++next_ordinal_;
    sessions_[s.id] = s;
    return s;
}

void AnnotationService::check_answer(const AssignedQuery& q, const Partition& bins) const {
    const auto clean = canonical(bins);
    if (clean.size() > cfg_.protocol.bin_count)
        throw ServiceError(400, "too many bins: " + std::to_string(clean.size()) + " > " +
                                    std::to_string(cfg_.protocol.bin_count));
    const std::set<ItemIndex> expected(q.items.begin(), q.items.end());
    std::set<ItemIndex> seen;
    for (const auto& bin : clean)
        for (auto item : bin) {
            if (!expected.count(item)) throw ServiceError(400, "item " + std::to_string(item) + " not in query");
            if (!seen.insert(item).second) throw ServiceError(400, "item " + std::to_string(item) + " duplicated");
        }
    for (auto item : q.items)
        if (!seen.count(item)) throw ServiceError(400, "item " + std::to_string(item) + " missing");
}

void AnnotationService::submit_answer(const std::string& session_id, QueryId query_id, const Partition& bins) {
    std::lock_guard lock(mutex_);
    auto& s = find_session(session_id);
    if (s.status != SessionStatus::active) throw ServiceError(409, "session already finalized");
    auto it = std::find_if(s.queries.begin(), s.queries.end(), [&](const auto& q) { return q.query_id == query_id; });
    if (it == s.queries.end()) throw ServiceError(404, "unknown query " + std::to_string(query_id));
    if (s.answers.count(query_id)) throw ServiceError(409, "query " + std::to_string(query_id) + " already answered");
    check_answer(*it, bins);
    auto clean = canonical(bins);
    log_event({{"event", "answer"}, {"session_id", session_id}, {"query_id", query_id}, {"bins", clean}});
    s.answers[query_id] = std::move(clean);
}

FinalizeResult AnnotationService::finalize_locked(Session& s, bool persist) {
    if (s.status != SessionStatus::active) throw ServiceError(409, "session already finalized");
    if (s.answers.size() != s.queries.size())
        throw ServiceError(409, "session incomplete: " + std::to_string(s.answers.size()) + " of " +
                                    std::to_string(s.queries.size()) + " answered");
    std::size_t n_sentinels = 0, matched = 0;
    for (const auto& q : s.queries) {
        if (!q.sentinel) continue;
        ++n_sentinels;
        if (same_partition(s.answers.at(q.query_id), cfg_.sentinels.at(*q.sentinel).clusters)) ++matched;
    }
    FinalizeResult r;
    r.sentinel_accuracy = n_sentinels ? static_cast<double>(matched) / static_cast<double>(n_sentinels) : 1.0;
    const bool accepted = n_sentinels == 0 || static_cast<double>(matched) >=
                                                  cfg_.protocol.sentinel_threshold * static_cast<double>(n_sentinels) - 1e-9;
    r.status = accepted ? SessionStatus::accepted : SessionStatus::rejected;

    std::vector<Bundle> fresh;
    if (accepted) {
        for (const auto& q : s.queries) {
            if (q.sentinel) continue;
            auto items = q.items;
            std::sort(items.begin(), items.end());
            fresh.push_back(make_bundle(q.query_id, std::move(items), s.answers.at(q.query_id), std::nullopt, s.phase));
        }
        ++accepted_since_advance_;
    }
    r.n_bundles = fresh.size();
    if (persist) {
        append_bundles(cfg_.store_dir / "bundles.jsonl", fresh);
        log_event({{"event", "finalize"},
                   {"session_id", s.id},
                   {"status", to_string(r.status)},
                   {"sentinel_accuracy", r.sentinel_accuracy},
                   {"n_bundles", r.n_bundles}});
        bundles_.insert(bundles_.end(), fresh.begin(), fresh.end());
    }
    s.status = r.status;
    s.sentinel_accuracy = r.sentinel_accuracy;
    return r;
}

FinalizeResult AnnotationService::finalize_session(const std::string& session_id) {
    std::lock_guard lock(mutex_);
    return finalize_locked(find_session(session_id), true);
}

PhaseResult AnnotationService::advance_phase() {
    std::vector<Bundle> snapshot;
    std::size_t accepted_at_snapshot = 0;
    int next_phase = 0;
    {
        std::lock_guard lock(mutex_);
        if (advancing_) throw ServiceError(409, "phase advance already running");
        if (accepted_since_advance_ == 0) throw ServiceError(409, "no accepted sessions since the last phase");
        snapshot = bundles_;
        accepted_at_snapshot = accepted_since_advance_;
        next_phase = state_.phase + 1;
        advancing_ = true;
    }
    // The optimizer runs without the lock so sessions keep flowing.
    OptimResult res;
    try {
        res = optimize(snapshot, cfg_.n_items, cfg_.optim, Mode::bundled);
    } catch (const std::exception& e) {
        std::lock_guard lock(mutex_);
        advancing_ = false;
        throw ServiceError(500, std::string("optimizer failed, phase unchanged: ") + e.what());
    }
    std::lock_guard lock(mutex_);
    advancing_ = false;
    log_event({{"event", "advance"}, {"phase", next_phase}, {"n_bundles", snapshot.size()}});
    state_ = SamplingState(SamplingStrategy::local, std::move(res.embedding), next_phase, cfg_.neighborhood_factor);
    accepted_since_advance_ -= accepted_at_snapshot;
    return {next_phase, snapshot.size()};
}

Session AnnotationService::session(const std::string& session_id) const {
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw ServiceError(404, "unknown session " + session_id);
    return it->second;
}

SamplingState AnnotationService::sampling_state() const {
    std::lock_guard lock(mutex_);
    return state_;
}

int AnnotationService::phase() const {
    std::lock_guard lock(mutex_);
    return state_.phase;
}

std::size_t AnnotationService::n_bundles() const {
    std::lock_guard lock(mutex_);
    return bundles_.size();
}

std::vector<Bundle> AnnotationService::bundles() const {
    std::lock_guard lock(mutex_);
    return bundles_;
}

json AnnotationService::intro() const {
    json j = cfg_.intro.is_object() ? cfg_.intro : json::object();
    j["query_size"] = cfg_.protocol.query_size;
    j["bin_count"] = cfg_.protocol.bin_count;
    j["queries_per_session"] = cfg_.protocol.queries_per_session;
    return j;
}

json AnnotationService::session_payload(const Session& s) const {
    json queries = json::array();
    for (const auto& q : s.queries) {
        json urls = json::array();
        for (auto item : q.items) urls.push_back("/images/" + std::to_string(item));
        queries.push_back({{"query_id", q.query_id},
                           {"item_ids", q.items},
                           {"image_urls", urls},
                           {"bin_count", cfg_.protocol.bin_count}});
    }
    return {{"session_id", s.id}, {"intro", intro()}, {"queries", queries}};
}

std::optional<std::filesystem::path> AnnotationService::image_path(ItemIndex item) const {
    if (!cfg_.image_dir || item >= cfg_.n_items) return std::nullopt;
    for (const char* ext : {".png", ".jpg", ".jpeg", ".gif", ".webp", ".svg"}) {
        auto p = *cfg_.image_dir / (std::to_string(item) + ext);
        if (std::filesystem::is_regular_file(p)) return p;
    }
    return std::nullopt;
}

// HTTP front end.

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    auto j = json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ServiceError(400, "request body must be a JSON object");
    return j;
}

std::string mime_for(const std::filesystem::path& p) {
    const auto ext = p.extension().string();
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".gif") return "image/gif";
    if (ext == ".webp") return "image/webp";
    if (ext == ".svg") return "image/svg+xml";
    return "application/octet-stream";
}

template <typename F>
httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const ServiceError& e) {
            send_json(res, e.status(), {{"error", e.what()}});
        } catch (const json::exception& e) {
            send_json(res, 400, {{"error", std::string("malformed request: ") + e.what()}});
        } catch (const std::exception& e) {
            send_json(res, 500, {{"error", e.what()}});
        }
    };
}

}  // namespace

struct HttpServer::Impl {
    AnnotationService& service;
    httplib::Server server;
};

HttpServer::HttpServer(AnnotationService& service) : impl_(new Impl{service, {}}) {
    auto& svc = impl_->service;
    auto& srv = impl_->server;

    srv.Post("/api/session", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                 const auto body = parse_body(req);
                 if (!body.contains("worker_id") || !body["worker_id"].is_string())
                     throw ServiceError(400, "worker_id required");
                 const auto s = svc.start_session(body["worker_id"].get<std::string>());
                 send_json(res, 200, svc.session_payload(s));
             }));

    srv.Post(R"(/api/session/([^/]+)/answer)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                 const auto body = parse_body(req);
                 const auto qid = body.at("query_id").get<QueryId>();
                 const auto bins = body.at("bins").get<Partition>();
                 try {
                     svc.submit_answer(req.matches[1], qid, bins);
                 } catch (const ServiceError& e) {
                     send_json(res, e.status(), {{"ok", false}, {"validation_error", e.what()}});
                     return;
                 }
                 send_json(res, 200, {{"ok", true}});
             }));

    srv.Post(R"(/api/session/([^/]+)/finalize)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                 const auto r = svc.finalize_session(req.matches[1]);
                 send_json(res, 200,
                           {{"status", to_string(r.status)},
                            {"sentinel_accuracy", r.sentinel_accuracy},
                            {"n_bundles", r.n_bundles}});
             }));

    srv.Post("/api/admin/advance-phase", guarded([&svc](const httplib::Request&, httplib::Response& res) {
                 const auto r = svc.advance_phase();
                 send_json(res, 200, {{"phase", r.phase}, {"n_bundles", r.n_bundles}});
             }));

    srv.Get(R"(/images/(\d+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                const auto id = std::stoull(req.matches[1]);
                const auto path = svc.image_path(static_cast<ItemIndex>(std::min<unsigned long long>(id, UINT32_MAX)));
                if (!path) throw ServiceError(404, "no image for item " + std::string(req.matches[1]));
                std::ifstream in(*path, std::ios::binary);
                std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
                res.set_content(std::move(bytes), mime_for(*path));
            }));
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) return impl_->server.bind_to_any_port(host);
    return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool HttpServer::listen() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() {
    if (impl_) impl_->server.stop();
}

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace bundlembed
