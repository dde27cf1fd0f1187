#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <utility>

#include "cuem/config.hpp"
#include "cuem/fixture_env.hpp"
#include "cuem/json_codec.hpp"
#include "cuem/pipeline.hpp"
#include "cuem/result.hpp"

namespace httplib {
class Server;
}

namespace cuem {

/// Trace persistence behind GET /v1/trace/{id}: an in-memory map mirrored to
/// a JSON-lines file ({"trace_id": ..., "result": ...} per line) so traces
/// survive restarts. Single writer, concurrent readers.
class TraceStore {
public:
    /// An empty path keeps the store memory-only.
    explicit TraceStore(std::string path = "");

    /// Loads whatever the backing file already holds. Malformed lines are an
    /// error; a missing file is a fresh store.
    Result<void> open();

    Result<void> put(const std::string& trace_id, const Json& result);
    std::optional<Json> get(const std::string& trace_id) const;
    std::size_t size() const;

private:
    std::string path_;
    mutable std::mutex mu_;
    std::map<std::string, Json> by_id_;
};

/// The request-handling core, separated from HTTP plumbing so tests can call
/// handlers directly. Every handler returns (status, JSON body).
///
///   POST /v1/query             MultimodalQuery in, PipelineResult out
///   GET  /v1/trace/{id}        PipelineTrace of a prior run
///   POST /v1/safety/instances  {query_text, canned_response} in, stored
///                              entry out (embedding computed server-side)
///   GET  /v1/health            {status} — 503 while any configured remote
///                              backend failed its startup probe
///
/// Errors: 400 invalid body, 404 unknown trace, 503 backend unavailable.
class Service {
public:
    using Reply = std::pair<int, Json>;

    /// Wires the environment, opens the trace store, and probes every
    /// configured remote backend once.
    static Result<std::unique_ptr<Service>> create(const AppConfig& cfg,
                                                   Warnings* warnings = nullptr);

    Reply handle_query(const std::string& body);
    Reply handle_trace(const std::string& trace_id) const;
    Reply handle_add_instance(const std::string& body);
    Reply handle_health() const;

    const LoadedEnv& loaded() const { return loaded_; }

private:
    Service(AppConfig cfg, LoadedEnv loaded);

    AppConfig cfg_;
    LoadedEnv loaded_;
    TraceStore traces_;
    std::string degraded_reason_;  // non-empty when a startup probe failed

    // The instance db is the one mutable piece of the environment
    // (POST /v1/safety/instances appends); queries copy it under the lock.
    mutable std::shared_mutex instance_mu_;
};

/// HTTP front: binds the service's handlers to a listening socket.
class ServiceFront {
public:
    explicit ServiceFront(std::shared_ptr<Service> service);
    ~ServiceFront();

    ServiceFront(const ServiceFront&) = delete;
    ServiceFront& operator=(const ServiceFront&) = delete;

    /// Binds and starts serving on a background thread; port 0 picks a free
    /// port. Returns the bound port.
    Result<int> start(const std::string& host, int port);

    /// Blocks until stop() (for the CLI serve command).
    void wait();

    void stop();

private:
    std::shared_ptr<Service> service_;
    std::unique_ptr<httplib::Server> server_;
    std::thread listener_;
};

}  // namespace cuem
