#pragma once

#include <string>
#include <vector>

#include "cuem/result.hpp"
#include "cuem/types.hpp"

namespace cuem {

/// Per-backend HTTP base URLs. An empty string means "use the local
/// fixture-backed implementation"; a non-empty one swaps in the JSON-over-HTTP
/// adapter for that capability, so a deployment can mix local mocks with real
/// model servers per backend.
struct BackendEndpoints {
    std::string generator;
    std::string describer;
    std::string scorer;
    std::string embedder;
    std::string nli;
    std::string relevance;
    std::string search;
    std::string image_search;
    std::string text_safety;
    std::string image_safety;
    std::string judge;

    /// Distinct non-empty base URLs, for the startup reachability probe.
    std::vector<std::string> distinct_bases() const;
};

/// File locations. All optional; empty means "not configured" (fixture tables
/// default to empty, templates fall back to the compiled-in set). Relative
/// paths in a loaded file resolve against the config file's directory.
struct PathsConfig {
    std::string templates_dir;
    std::string fixtures_dir;
    std::string api_registry;
    std::string instance_db;
    std::string interaction_log;
    std::string eval_cases;
};

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8870;
    std::string trace_store;  // JSON-lines persistence behind /v1/trace
};

struct AppConfig {
    PipelineConfig pipeline;
    PathsConfig paths;
    ServiceConfig service;
    BackendEndpoints backends;
};

/// Parses the config text. Accepted syntax is the TOML subset the file
/// actually needs: [section] headers, key = value lines with quoted strings
/// (\" \\ \n \t escapes), integers, reals, and true/false, plus # comments.
/// Unknown sections or keys and duplicate keys are errors; values feeding
/// PipelineConfig are range-checked via validate_config.
Result<AppConfig> parse_app_config(const std::string& text);

/// Reads and parses a config file, then resolves every relative path in
/// [paths] and [service].trace_store against the file's directory.
Result<AppConfig> load_app_config(const std::string& path);

/// Config-path fallback chain: the explicit value if non-empty, else the
/// CUEM_CONFIG environment variable, else "".
std::string config_path_or_env(const std::string& cli_value);

/// One row of the API registry file: the descriptor the selector scores, the
/// document category its connector emits, the fixture catalog the mock
/// connector serves, and an optional HTTP endpoint that swaps the mock for a
/// remote connector.
struct ApiRegistryEntry {
    ApiDescriptor descriptor;
    DocSource category = DocSource::web;
    std::vector<Document> catalog;
    std::string endpoint;
};

/// Loads a JSON array of {id, name, description, safety_relevant,
/// category_response?, category?, catalog?, endpoint?} objects.
Result<std::vector<ApiRegistryEntry>> load_api_registry(const std::string& path);

}  // namespace cuem
