#include "cuem/service.hpp"

#include <filesystem>
#include <fstream>

#include "httplib.h"

#include "cuem/http_backends.hpp"
#include "cuem/safety.hpp"
#include "cuem/text.hpp"

namespace cuem {

TraceStore::TraceStore(std::string path) : path_(std::move(path)) {}

Result<void> TraceStore::open() {
    std::lock_guard lock(mu_);
    by_id_.clear();
    if (path_.empty() || !std::filesystem::exists(path_)) return {};
    std::ifstream in(path_, std::ios::binary);
    if (!in) return make_error<void>(Errc::io_error, "cannot read " + path_);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto parsed = parse_json(line);
        if (!parsed.ok() || !parsed.value().is_object() ||
            !parsed.value().contains("trace_id") || !parsed.value().contains("result")) {
            return make_error<void>(Errc::parse_error,
                                    path_ + ":" + std::to_string(line_no) +
                                        ": line needs trace_id and result");
        }
        by_id_[parsed.value()["trace_id"].get<std::string>()] = parsed.value()["result"];
    }
    return {};
}

Result<void> TraceStore::put(const std::string& trace_id, const Json& result) {
    std::lock_guard lock(mu_);
    by_id_[trace_id] = result;
    if (path_.empty()) return {};
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) return make_error<void>(Errc::io_error, "cannot append to " + path_);
    Json line;
    line["result"] = result;
    line["trace_id"] = trace_id;
    out << line.dump() << "\n";
    if (!out.good()) return make_error<void>(Errc::io_error, "write failed: " + path_);
    return {};
}

std::optional<Json> TraceStore::get(const std::string& trace_id) const {
    std::lock_guard lock(mu_);
    if (auto it = by_id_.find(trace_id); it != by_id_.end()) return it->second;
    return std::nullopt;
}

std::size_t TraceStore::size() const {
    std::lock_guard lock(mu_);
    return by_id_.size();
}

namespace {

Json error_body(const std::string& message) {
    Json j;
    j["error"] = message;
    return j;
}

}  // namespace

Service::Service(AppConfig cfg, LoadedEnv loaded)
    : cfg_(std::move(cfg)), loaded_(std::move(loaded)), traces_(cfg_.service.trace_store) {}

Result<std::unique_ptr<Service>> Service::create(const AppConfig& cfg, Warnings* warnings) {
    auto loaded = load_env(cfg, warnings);
    if (!loaded.ok()) return loaded.error();
    std::unique_ptr<Service> service(new Service(cfg, loaded.take()));
    if (auto opened = service->traces_.open(); !opened.ok()) return opened.error();
    for (const auto& base : cfg.backends.distinct_bases()) {
        if (auto probe = probe_backend(base); !probe.ok()) {
            service->degraded_reason_ = probe.error().message;
            warn(warnings, "service", "startup probe: " + probe.error().message);
            break;
        }
    }
    return service;
}

Service::Reply Service::handle_query(const std::string& body) {
    if (!degraded_reason_.empty()) return {503, error_body(degraded_reason_)};

    auto parsed = parse_json(body);
    if (!parsed.ok()) return {400, error_body(parsed.error().message)};
    auto query = query_from_json(parsed.value());
    if (!query.ok()) return {400, error_body(query.error().message)};

    // Copy the environment so a concurrent instance-db addition cannot race
    // the run; everything inside is either shared-immutable or small.
    PipelineEnv env;
    {
        std::shared_lock lock(instance_mu_);
        env = loaded_.env;
    }
    auto result = run_pipeline(query.value(), cfg_.pipeline, env);
    if (!result.ok()) {
        const int status = result.code() == Errc::backend_unavailable ? 503 : 400;
        return {status, error_body(result.error().message)};
    }
    const Json result_json = to_json(result.value());
    if (auto stored = traces_.put(result.value().trace.trace_id, result_json); !stored.ok()) {
        return {503, error_body(stored.error().message)};
    }
    return {200, result_json};
}

Service::Reply Service::handle_trace(const std::string& trace_id) const {
    auto result = traces_.get(trace_id);
    if (!result.has_value()) return {404, error_body("unknown trace " + trace_id)};
    if (result->is_object() && result->contains("trace")) return {200, (*result)["trace"]};
    return {200, *result};
}

Service::Reply Service::handle_add_instance(const std::string& body) {
    auto parsed = parse_json(body);
    if (!parsed.ok()) return {400, error_body(parsed.error().message)};
    const Json& j = parsed.value();
    if (!j.is_object() || !j.contains("query_text") || !j.contains("canned_response") ||
        !j["query_text"].is_string() || !j["canned_response"].is_string()) {
        return {400, error_body("body needs query_text and canned_response strings")};
    }
    const auto query_text = j["query_text"].get<std::string>();
    const auto canned = j["canned_response"].get<std::string>();
    const std::string id = "inst-" + digest_of_string(query_text).substr(0, 12);

    auto entry = make_instance_entry(id, query_text, canned, *loaded_.env.backends.embedder);
    if (!entry.ok()) {
        const int status = entry.code() == Errc::backend_unavailable ? 503 : 400;
        return {status, error_body(entry.error().message)};
    }

    std::unique_lock lock(instance_mu_);
    loaded_.env.instance_db.push_back(entry.value());
    if (!cfg_.paths.instance_db.empty()) {
        if (auto saved = save_instance_db(loaded_.env.instance_db, cfg_.paths.instance_db);
            !saved.ok()) {
            loaded_.env.instance_db.pop_back();
            return {503, error_body(saved.error().message)};
        }
    }
    Json reply;
    reply["canned_response"] = entry.value().canned_response;
    reply["id"] = entry.value().id;
    reply["query_text"] = entry.value().query_text;
    return {200, reply};
}

Service::Reply Service::handle_health() const {
    Json j;
    if (!degraded_reason_.empty()) {
        j["reason"] = degraded_reason_;
        j["status"] = "degraded";
        return {503, j};
    }
    j["status"] = "ok";
    return {200, j};
}

ServiceFront::ServiceFront(std::shared_ptr<Service> service)
    : service_(std::move(service)), server_(std::make_unique<httplib::Server>()) {}

ServiceFront::~ServiceFront() { stop(); }

Result<int> ServiceFront::start(const std::string& host, int port) {
    auto* svc = service_.get();
    auto respond = [](httplib::Response& res, const Service::Reply& reply) {
        res.status = reply.first;
        res.set_content(reply.second.dump(), "application/json");
    };
    server_->Post("/v1/query", [svc, respond](const httplib::Request& req,
                                              httplib::Response& res) {
        respond(res, svc->handle_query(req.body));
    });
    server_->Get("/v1/trace/:id", [svc, respond](const httplib::Request& req,
                                                 httplib::Response& res) {
        respond(res, svc->handle_trace(req.path_params.at("id")));
    });
    server_->Post("/v1/safety/instances", [svc, respond](const httplib::Request& req,
                                                         httplib::Response& res) {
        respond(res, svc->handle_add_instance(req.body));
    });
    server_->Get("/v1/health", [svc, respond](const httplib::Request&,
                                              httplib::Response& res) {
        respond(res, svc->handle_health());
    });

    int bound = port;
    if (port == 0) {
        bound = server_->bind_to_any_port(host);
        if (bound < 0) {
            return make_error<int>(Errc::io_error, "cannot bind " + host + " on any port");
        }
    } else if (!server_->bind_to_port(host, port)) {
        return make_error<int>(Errc::io_error,
                               "cannot bind " + host + ":" + std::to_string(port));
    }
    listener_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return bound;
}

void ServiceFront::wait() {
    if (listener_.joinable()) listener_.join();
}

void ServiceFront::stop() {
    if (server_) server_->stop();
    if (listener_.joinable()) listener_.join();
}

}  // namespace cuem
