#include "cuem/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <string>

#include "cuem/json_codec.hpp"
#include "cuem/templates.hpp"
#include "cuem/text.hpp"

namespace cuem {

std::vector<std::string> BackendEndpoints::distinct_bases() const {
    std::vector<std::string> bases;
    for (const auto* url : {&generator, &describer, &scorer, &embedder, &nli, &relevance,
                            &search, &image_search, &text_safety, &image_safety, &judge}) {
        if (!url->empty() && std::find(bases.begin(), bases.end(), *url) == bases.end()) {
            bases.push_back(*url);
        }
    }
    return bases;
}

namespace {

Error at_line(std::size_t line_no, const std::string& message) {
    return Error{Errc::parse_error, "config line " + std::to_string(line_no) + ": " + message};
}

/// One parsed scalar. Strings keep their unquoted payload; numbers and bools
/// are validated and converted at assignment, where the target type is known.
struct TomlValue {
    enum class Kind { string, number, boolean } kind;
    std::string text;   // string payload
    double number = 0;  // numeric payload
    bool flag = false;  // boolean payload
};

Result<TomlValue> parse_value(const std::string& raw, std::size_t line_no) {
    if (raw.empty()) return at_line(line_no, "missing value");
    if (raw.front() == '"') {
        std::string out;
        std::size_t i = 1;
        for (; i < raw.size(); ++i) {
            const char c = raw[i];
            if (c == '\\') {
                if (i + 1 >= raw.size()) return at_line(line_no, "dangling escape");
                const char esc = raw[++i];
                switch (esc) {
                    case '"': out += '"'; break;
                    case '\\': out += '\\'; break;
                    case 'n': out += '\n'; break;
                    case 't': out += '\t'; break;
                    default:
                        return at_line(line_no, std::string("unsupported escape \\") + esc);
                }
            } else if (c == '"') {
                break;
            } else {
                out += c;
            }
        }
        if (i >= raw.size()) return at_line(line_no, "unterminated string");
        // Only whitespace or a comment may follow the closing quote.
        const auto rest = trim(raw.substr(i + 1));
        if (!rest.empty() && rest.front() != '#') {
            return at_line(line_no, "unexpected text after string value");
        }
        return TomlValue{TomlValue::Kind::string, out, 0, false};
    }

    // Bare value: runs to end of line or an inline comment.
    std::string bare = raw;
    if (const auto hash = bare.find('#'); hash != std::string::npos) bare = bare.substr(0, hash);
    bare = trim(bare);
    if (bare == "true") return TomlValue{TomlValue::Kind::boolean, "", 0, true};
    if (bare == "false") return TomlValue{TomlValue::Kind::boolean, "", 0, false};
    try {
        std::size_t used = 0;
        const double num = std::stod(bare, &used);
        if (used != bare.size()) return at_line(line_no, "malformed number: " + bare);
        return TomlValue{TomlValue::Kind::number, "", num, false};
    } catch (const std::exception&) {
        return at_line(line_no, "unrecognized value: " + bare);
    }
}

Result<void> assign_string(std::string& target, const TomlValue& v, const std::string& key,
                           std::size_t line_no) {
    if (v.kind != TomlValue::Kind::string) {
        return at_line(line_no, key + " must be a quoted string");
    }
    target = v.text;
    return {};
}

Result<void> assign_int(int& target, const TomlValue& v, const std::string& key,
                        std::size_t line_no) {
    if (v.kind != TomlValue::Kind::number || v.number != static_cast<int>(v.number)) {
        return at_line(line_no, key + " must be an integer");
    }
    target = static_cast<int>(v.number);
    return {};
}

Result<void> assign_real(double& target, const TomlValue& v, const std::string& key,
                         std::size_t line_no) {
    if (v.kind != TomlValue::Kind::number) {
        return at_line(line_no, key + " must be a number");
    }
    target = v.number;
    return {};
}

}  // namespace

Result<AppConfig> parse_app_config(const std::string& text) {
    AppConfig cfg;
    std::string section;
    std::set<std::string> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto eol = text.find('\n', pos);
        std::string line = text.substr(pos, eol == std::string::npos ? std::string::npos
                                                                     : eol - pos);
        pos = eol == std::string::npos ? text.size() + 1 : eol + 1;
        ++line_no;

        line = trim(line);
        if (line.empty() || line.front() == '#') continue;

        if (line.front() == '[') {
            if (line.back() != ']') return at_line(line_no, "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section != "pipeline" && section != "paths" && section != "service" &&
                section != "backends") {
                return at_line(line_no, "unknown section [" + section + "]");
            }
            continue;
        }

        const auto eq = line.find('=');
        if (eq == std::string::npos) return at_line(line_no, "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) return at_line(line_no, "empty key");
        if (section.empty()) return at_line(line_no, "key outside any [section]");
        if (!seen.insert(section + "." + key).second) {
            return at_line(line_no, "duplicate key " + section + "." + key);
        }
        auto value = parse_value(trim(line.substr(eq + 1)), line_no);
        if (!value.ok()) return value.error();
        const TomlValue& v = value.value();

        Result<void> assigned = {};
        if (section == "pipeline") {
            auto& p = cfg.pipeline;
            if (key == "k_top_docs") assigned = assign_int(p.k_top_docs, v, key, line_no);
            else if (key == "max_supplementary_queries")
                assigned = assign_int(p.max_supplementary_queries, v, key, line_no);
            else if (key == "api_threshold")
                assigned = assign_real(p.api_threshold, v, key, line_no);
            else if (key == "instance_similarity_threshold")
                assigned = assign_real(p.instance_similarity_threshold, v, key, line_no);
            else if (key == "annotated_tag_similarity_threshold")
                assigned = assign_real(p.annotated_tag_similarity_threshold, v, key, line_no);
            else if (key == "summary_char_budget")
                assigned = assign_int(p.summary_char_budget, v, key, line_no);
            else if (key == "directive_sentinel")
                assigned = assign_string(p.directive_sentinel, v, key, line_no);
            else return at_line(line_no, "unknown key pipeline." + key);
        } else if (section == "paths") {
            auto& p = cfg.paths;
            if (key == "templates_dir") assigned = assign_string(p.templates_dir, v, key, line_no);
            else if (key == "fixtures_dir")
                assigned = assign_string(p.fixtures_dir, v, key, line_no);
            else if (key == "api_registry")
                assigned = assign_string(p.api_registry, v, key, line_no);
            else if (key == "instance_db")
                assigned = assign_string(p.instance_db, v, key, line_no);
            else if (key == "interaction_log")
                assigned = assign_string(p.interaction_log, v, key, line_no);
            else if (key == "eval_cases")
                assigned = assign_string(p.eval_cases, v, key, line_no);
            else return at_line(line_no, "unknown key paths." + key);
        } else if (section == "service") {
            auto& s = cfg.service;
            if (key == "host") assigned = assign_string(s.host, v, key, line_no);
            else if (key == "port") assigned = assign_int(s.port, v, key, line_no);
            else if (key == "trace_store")
                assigned = assign_string(s.trace_store, v, key, line_no);
            else return at_line(line_no, "unknown key service." + key);
        } else {  // backends
            auto& b = cfg.backends;
            if (key == "generator") assigned = assign_string(b.generator, v, key, line_no);
            else if (key == "describer") assigned = assign_string(b.describer, v, key, line_no);
            else if (key == "scorer") assigned = assign_string(b.scorer, v, key, line_no);
            else if (key == "embedder") assigned = assign_string(b.embedder, v, key, line_no);
            else if (key == "nli") assigned = assign_string(b.nli, v, key, line_no);
            else if (key == "relevance") assigned = assign_string(b.relevance, v, key, line_no);
            else if (key == "search") assigned = assign_string(b.search, v, key, line_no);
            else if (key == "image_search")
                assigned = assign_string(b.image_search, v, key, line_no);
            else if (key == "text_safety")
                assigned = assign_string(b.text_safety, v, key, line_no);
            else if (key == "image_safety")
                assigned = assign_string(b.image_safety, v, key, line_no);
            else if (key == "judge") assigned = assign_string(b.judge, v, key, line_no);
            else return at_line(line_no, "unknown key backends." + key);
        }
        if (!assigned.ok()) return assigned.error();
    }

    if (auto valid = validate_config(cfg.pipeline); !valid.ok()) return valid.error();
    if (cfg.service.port < 0 || cfg.service.port > 65535) {
        return make_error<AppConfig>(Errc::invalid_config, "service.port out of range");
    }
    return cfg;
}

namespace {

void rebase(std::string& path, const std::filesystem::path& base) {
    if (path.empty()) return;
    std::filesystem::path p(path);
    if (p.is_relative()) path = (base / p).lexically_normal().string();
}

}  // namespace

Result<AppConfig> load_app_config(const std::string& path) {
    auto text = read_text_file(path);
    if (!text.ok()) return text.error();
    auto cfg = parse_app_config(text.value());
    if (!cfg.ok()) {
        return make_error<AppConfig>(cfg.code(), path + ": " + cfg.error().message);
    }
    const auto base = std::filesystem::path(path).parent_path();
    auto& c = cfg.value();
    rebase(c.paths.templates_dir, base);
    rebase(c.paths.fixtures_dir, base);
    rebase(c.paths.api_registry, base);
    rebase(c.paths.instance_db, base);
    rebase(c.paths.interaction_log, base);
    rebase(c.paths.eval_cases, base);
    rebase(c.service.trace_store, base);
    return cfg;
}

std::string config_path_or_env(const std::string& cli_value) {
    if (!cli_value.empty()) return cli_value;
    if (const char* env = std::getenv("CUEM_CONFIG"); env != nullptr) return env;
    return "";
}

Result<std::vector<ApiRegistryEntry>> load_api_registry(const std::string& path) {
    auto text = read_text_file(path);
    if (!text.ok()) return text.error();
    auto parsed = parse_json(text.value());
    if (!parsed.ok()) {
        return make_error<std::vector<ApiRegistryEntry>>(
            Errc::parse_error, path + ": " + parsed.error().message);
    }
    const Json& root = parsed.value();
    if (!root.is_array()) {
        return make_error<std::vector<ApiRegistryEntry>>(Errc::parse_error,
                                                         path + ": expected a JSON array");
    }
    std::vector<ApiRegistryEntry> entries;
    for (const auto& item : root) {
        if (!item.is_object() || !item.contains("id") || !item.contains("name") ||
            !item.contains("description")) {
            return make_error<std::vector<ApiRegistryEntry>>(
                Errc::parse_error, path + ": registry entry needs id, name, description");
        }
        std::optional<std::string> category_response;
        if (item.contains("category_response") && !item["category_response"].is_null()) {
            category_response = item["category_response"].get<std::string>();
        }
        auto descriptor = make_api_descriptor(
            item["id"].get<std::string>(), item["name"].get<std::string>(),
            item["description"].get<std::string>(), item.value("safety_relevant", false),
            category_response);
        if (!descriptor.ok()) {
            return make_error<std::vector<ApiRegistryEntry>>(
                descriptor.code(), path + ": " + descriptor.error().message);
        }

        ApiRegistryEntry entry;
        entry.descriptor = descriptor.take();
        auto source = doc_source_from_name(item.value("category", "web"));
        if (!source.ok()) {
            return make_error<std::vector<ApiRegistryEntry>>(
                source.code(), path + ": " + source.error().message);
        }
        entry.category = source.value();
        entry.endpoint = item.value("endpoint", "");
        if (item.contains("catalog")) {
            if (!item["catalog"].is_array()) {
                return make_error<std::vector<ApiRegistryEntry>>(
                    Errc::parse_error, path + ": catalog must be an array");
            }
            for (const auto& doc_json : item["catalog"]) {
                auto doc = document_from_json(doc_json);
                if (!doc.ok()) {
                    return make_error<std::vector<ApiRegistryEntry>>(
                        doc.code(), path + ": " + doc.error().message);
                }
                entry.catalog.push_back(doc.take());
            }
        }
        entries.push_back(std::move(entry));
    }
    return entries;
}

}  // namespace cuem
