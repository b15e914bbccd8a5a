#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "bundlembed/core.hpp"
#include "bundlembed/sampler.hpp"

namespace bundlembed {

struct ProtocolConfig {
    std::size_t queries_per_session = 15;
    std::size_t sentinels_per_session = 3;
    double sentinel_threshold = 0.7;
    std::size_t query_size = 20;
    std::size_t bin_count = 5;

    void validate() const;
};

// A query with a known-good answer.
struct Sentinel {
    std::vector<ItemIndex> items;
    Partition clusters;
};

struct ServerConfig {
    ProtocolConfig protocol;
    std::size_t n_items = 0;
    std::uint64_t seed = 0;
    std::filesystem::path store_dir = "store";
    std::optional<std::filesystem::path> image_dir;
    std::vector<Sentinel> sentinels;
    OptimConfig optim;
    std::size_t neighborhood_factor = 5;
    nlohmann::json intro = nlohmann::json::object();

    void validate() const;
};

ServerConfig server_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ServerConfig& c);

enum class SessionStatus { active, accepted, rejected };
std::string to_string(SessionStatus s);

struct AssignedQuery {
    QueryId query_id = 0;
    std::vector<ItemIndex> items;
    std::optional<std::size_t> sentinel;  // index into ServerConfig::sentinels
};

struct Session {
    std::string id;
    std::string worker_id;
    std::uint64_t ordinal = 0;
    int phase = 0;
    std::vector<AssignedQuery> queries;
    std::map<QueryId, Partition> answers;
    SessionStatus status = SessionStatus::active;
    std::optional<double> sentinel_accuracy;
};

// Carries the HTTP status the front end should answer with.
class ServiceError : public std::runtime_error {
public:
    ServiceError(int status, const std::string& msg) : std::runtime_error(msg), status_(status) {}
    int status() const { return status_; }

private:
    int status_;
};

struct FinalizeResult {
    SessionStatus status = SessionStatus::active;
    double sentinel_accuracy = 0.0;
    std::size_t n_bundles = 0;  // bundles appended to the store
};

struct PhaseResult {
    int phase = 0;
    std::size_t n_bundles = 0;
};

// True when both partitions group the items identically, ignoring bin order
// and order within bins. Empty bins are ignored.
bool same_partition(const Partition& a, const Partition& b);

// Session bookkeeping, quality control and the bundle store. All methods are
// safe to call from several threads; store writes happen under one lock.
//
// Files under store_dir:
//   bundles.jsonl   accepted bundles, append-only
//   sessions.jsonl  event log (start, answer, finalize, advance)
// Constructing a service over an existing store replays the log.
class AnnotationService {
public:
    explicit AnnotationService(ServerConfig cfg);

    Session start_session(const std::string& worker_id);
    void submit_answer(const std::string& session_id, QueryId query_id, const Partition& bins);
    FinalizeResult finalize_session(const std::string& session_id);
    PhaseResult advance_phase();

    Session session(const std::string& session_id) const;
    SamplingState sampling_state() const;
    int phase() const;
    std::size_t n_bundles() const;
    std::vector<Bundle> bundles() const;
    const ServerConfig& config() const { return cfg_; }

    // Client-facing payloads. Sentinel flags are never exposed.
    nlohmann::json intro() const;
    nlohmann::json session_payload(const Session& s) const;
    std::optional<std::filesystem::path> image_path(ItemIndex item) const;

private:
    void replay();
    void log_event(const nlohmann::json& event);
    Session& find_session(const std::string& id);
    void check_answer(const AssignedQuery& q, const Partition& bins) const;
    FinalizeResult finalize_locked(Session& s, bool persist);

    ServerConfig cfg_;
    mutable std::mutex mutex_;
    std::map<std::string, Session> sessions_;
    std::uint64_t next_ordinal_ = 0;
    std::vector<Bundle> bundles_;
    SamplingState state_;
    std::size_t accepted_since_advance_ = 0;
    bool advancing_ = false;
};

// HTTP front end over an AnnotationService.
class HttpServer {
public:
    explicit HttpServer(AnnotationService& service);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    // Returns the bound port (port 0 picks a free one).
    int bind(const std::string& host, int port);
    // Blocks until stop().
    bool listen();
    void stop();
    void wait_until_ready() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace bundlembed
