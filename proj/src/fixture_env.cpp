#include "cuem/fixture_env.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "cuem/http_backends.hpp"
#include "cuem/json_codec.hpp"
#include "cuem/mocks.hpp"
#include "cuem/safety.hpp"
#include "cuem/text.hpp"

namespace cuem {

namespace {

/// Reads an optional fixture file. Missing → nullopt with a warning; present
/// but unreadable or malformed → error.
Result<std::optional<Json>> read_optional_json(const std::string& path, Warnings* warnings) {
    if (!std::filesystem::exists(path)) {
        warn(warnings, "env", path + " not found; table starts empty");
        return std::optional<Json>{};
    }
    auto text = read_text_file(path);
    if (!text.ok()) return text.error();
    auto parsed = parse_json(text.value());
    if (!parsed.ok()) {
        return make_error<std::optional<Json>>(Errc::parse_error,
                                               path + ": " + parsed.error().message);
    }
    return std::optional<Json>{parsed.take()};
}

Error rewrap(const std::string& path, const Error& e) {
    return Error{e.code, path + ": " + e.message};
}

Result<std::vector<Document>> parse_corpus(const Json& root, const std::string& path) {
    if (!root.is_array()) {
        return make_error<std::vector<Document>>(Errc::parse_error,
                                                 path + ": expected an array of documents");
    }
    std::vector<Document> docs;
    for (const auto& j : root) {
        auto doc = document_from_json(j);
        if (!doc.ok()) return rewrap(path, doc.error());
        docs.push_back(doc.take());
    }
    return docs;
}

struct GeneratorFixture {
    std::vector<ScriptedGenerator::Entry> entries;
    std::string default_output = "UNKNOWN";
    std::string model_id = "scripted-v1";
};

Result<GeneratorFixture> parse_generator(const Json& root, const std::string& path) {
    if (!root.is_object() || !root.contains("entries") || !root["entries"].is_array()) {
        return make_error<GeneratorFixture>(Errc::parse_error,
                                            path + ": expected {entries: [...]}");
    }
    GeneratorFixture fixture;
    fixture.default_output = root.value("default_output", fixture.default_output);
    fixture.model_id = root.value("model_id", fixture.model_id);
    for (const auto& j : root["entries"]) {
        if (!j.is_object() || !j.contains("id") || !j.contains("match") ||
            !j.contains("output") || !j["match"].is_array()) {
            return make_error<GeneratorFixture>(
                Errc::parse_error, path + ": entry needs id, match array, output");
        }
        ScriptedGenerator::Entry entry;
        entry.id = j["id"].get<std::string>();
        for (const auto& m : j["match"]) entry.match.push_back(m.get<std::string>());
        entry.output = j["output"].get<std::string>();
        fixture.entries.push_back(std::move(entry));
    }
    return fixture;
}

Result<std::map<std::string, std::string>> parse_string_map(const Json& root,
                                                            const std::string& path) {
    if (!root.is_object()) {
        return make_error<std::map<std::string, std::string>>(Errc::parse_error,
                                                              path + ": expected an object");
    }
    std::map<std::string, std::string> out;
    for (const auto& [key, value] : root.items()) {
        if (!value.is_string()) {
            return make_error<std::map<std::string, std::string>>(
                Errc::parse_error, path + ": value for " + key + " must be a string");
        }
        out[key] = value.get<std::string>();
    }
    return out;
}

Result<std::map<std::string, std::vector<ScoredDocument>>> parse_similar(
    const Json& root, const std::string& path) {
    using Table = std::map<std::string, std::vector<ScoredDocument>>;
    if (!root.is_object()) {
        return make_error<Table>(Errc::parse_error, path + ": expected an object");
    }
    Table out;
    for (const auto& [digest, list] : root.items()) {
        if (!list.is_array()) {
            return make_error<Table>(Errc::parse_error,
                                     path + ": neighbors for " + digest + " must be an array");
        }
        std::vector<ScoredDocument> neighbors;
        for (const auto& j : list) {
            if (!j.is_object() || !j.contains("doc") || !j.contains("similarity") ||
                !j["similarity"].is_number()) {
                return make_error<Table>(Errc::parse_error,
                                         path + ": neighbor needs doc and similarity");
            }
            auto doc = document_from_json(j["doc"]);
            if (!doc.ok()) return rewrap(path, doc.error());
            neighbors.push_back(ScoredDocument{doc.take(), j["similarity"].get<double>()});
        }
        out[digest] = std::move(neighbors);
    }
    return out;
}

Result<std::map<std::string, std::vector<std::string>>> parse_lexicons(
    const Json& root, const std::string& path) {
    using Table = std::map<std::string, std::vector<std::string>>;
    if (!root.is_object()) {
        return make_error<Table>(Errc::parse_error, path + ": expected an object");
    }
    Table out;
    for (const auto& [api_id, list] : root.items()) {
        if (!list.is_array()) {
            return make_error<Table>(Errc::parse_error,
                                     path + ": lexicon for " + api_id + " must be an array");
        }
        std::vector<std::string> triggers;
        for (const auto& j : list) {
            if (!j.is_string()) {
                return make_error<Table>(Errc::parse_error,
                                         path + ": triggers must be strings");
            }
            triggers.push_back(j.get<std::string>());
        }
        out[api_id] = std::move(triggers);
    }
    return out;
}

Result<std::vector<std::string>> parse_string_list(const Json& root, const std::string& path) {
    if (!root.is_array()) {
        return make_error<std::vector<std::string>>(Errc::parse_error,
                                                    path + ": expected an array");
    }
    std::vector<std::string> out;
    for (const auto& j : root) {
        if (!j.is_string()) {
            return make_error<std::vector<std::string>>(Errc::parse_error,
                                                        path + ": entries must be strings");
        }
        out.push_back(j.get<std::string>());
    }
    return out;
}

Result<std::map<std::string, bool>> parse_bool_map(const Json& root, const std::string& path) {
    if (!root.is_object()) {
        return make_error<std::map<std::string, bool>>(Errc::parse_error,
                                                       path + ": expected an object");
    }
    std::map<std::string, bool> out;
    for (const auto& [key, value] : root.items()) {
        if (!value.is_boolean()) {
            return make_error<std::map<std::string, bool>>(
                Errc::parse_error, path + ": value for " + key + " must be a boolean");
        }
        out[key] = value.get<bool>();
    }
    return out;
}

Result<std::map<std::string, ImageRef>> parse_images(const Json& root,
                                                     const std::string& path) {
    using Table = std::map<std::string, ImageRef>;
    if (!root.is_array()) {
        return make_error<Table>(Errc::parse_error, path + ": expected an array");
    }
    Table out;
    for (const auto& j : root) {
        auto image = image_ref_from_json(j);
        if (!image.ok()) return rewrap(path, image.error());
        auto ref = image.take();
        if (out.count(ref.id) != 0) {
            return make_error<Table>(Errc::parse_error, path + ": duplicate image id " + ref.id);
        }
        out[ref.id] = std::move(ref);
    }
    return out;
}

Result<std::vector<InteractionRecord>> load_interaction_log(const std::string& path,
                                                            Warnings* warnings) {
    std::vector<InteractionRecord> log;
    if (path.empty()) return log;
    if (!std::filesystem::exists(path)) {
        warn(warnings, "env", path + " not found; interaction log starts empty");
        return log;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        return make_error<std::vector<InteractionRecord>>(Errc::io_error,
                                                          "cannot read " + path);
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto parsed = parse_json(line);
        if (!parsed.ok() || !parsed.value().is_object() ||
            !parsed.value().contains("query") || !parsed.value().contains("image_id")) {
            return make_error<std::vector<InteractionRecord>>(
                Errc::parse_error,
                path + ":" + std::to_string(line_no) + ": record needs query and image_id");
        }
        log.push_back(InteractionRecord{parsed.value()["query"].get<std::string>(),
                                        parsed.value()["image_id"].get<std::string>()});
    }
    return log;
}

std::string fixture_path(const std::string& dir, const char* name) {
    return (std::filesystem::path(dir) / name).string();
}

}  // namespace

Result<LoadedEnv> load_env(const AppConfig& cfg, Warnings* warnings) {
    LoadedEnv loaded;
    PipelineEnv& env = loaded.env;

    // Fixture tables, all optional. When the fixtures dir itself is unset the
    // tables stay empty silently — a fully remote deployment has none.
    std::vector<Document> corpus;
    GeneratorFixture generator;
    std::map<std::string, std::string> captions;
    std::map<std::string, std::vector<ScoredDocument>> similar;
    std::map<std::string, std::vector<std::string>> lexicons;
    std::vector<std::string> blocklist;
    std::map<std::string, bool> image_flags;

    if (!cfg.paths.fixtures_dir.empty()) {
        struct TableLoad {
            const char* file;
            std::function<Result<void>(const Json&, const std::string&)> apply;
        };
        const std::vector<TableLoad> tables{
            {"corpus.json",
             [&](const Json& j, const std::string& p) -> Result<void> {
                 auto r = parse_corpus(j, p);
                 if (!r.ok()) return r.error();
                 corpus = r.take();
                 return {};
             }},
            {"generator.json",
             [&](const Json& j, const std::string& p) -> Result<void> {
                 auto r = parse_generator(j, p);
                 if (!r.ok()) return r.error();
                 generator = r.take();
                 return {};
             }},
            {"captions.json",
             [&](const Json& j, const std::string& p) -> Result<void> {
                 auto r = parse_string_map(j, p);
                 if (!r.ok()) return r.error();
                 captions = r.take();
                 return {};
             }},
            {"similar.json",
             [&](const Json& j, const std::string& p) -> Result<void> {
                 auto r = parse_similar(j, p);
                 if (!r.ok()) return r.error();
                 similar = r.take();
                 return {};
             }},
            {"token_lexicons.json",
             [&](const Json& j, const std::string& p) -> Result<void> {
                 auto r = parse_lexicons(j, p);
                 if (!r.ok()) return r.error();
                 lexicons = r.take();
                 return {};
             }},
            {"blocklist.json",
             [&](const Json& j, const std::string& p) -> Result<void> {
                 auto r = parse_string_list(j, p);
                 if (!r.ok()) return r.error();
                 blocklist = r.take();
                 return {};
             }},
            {"image_safety.json",
             [&](const Json& j, const std::string& p) -> Result<void> {
                 auto r = parse_bool_map(j, p);
                 if (!r.ok()) return r.error();
                 image_flags = r.take();
                 return {};
             }},
            {"images.json",
             [&](const Json& j, const std::string& p) -> Result<void> {
                 auto r = parse_images(j, p);
                 if (!r.ok()) return r.error();
                 loaded.images = r.take();
                 return {};
             }},
        };
        for (const auto& table : tables) {
            const auto path = fixture_path(cfg.paths.fixtures_dir, table.file);
            auto json = read_optional_json(path, warnings);
            if (!json.ok()) return json.error();
            if (!json.value().has_value()) continue;
            if (auto applied = table.apply(*json.value(), path); !applied.ok()) {
                return applied.error();
            }
        }
    }

    // Backends: HTTP adapter when an endpoint is configured, mock otherwise.
    const BackendEndpoints& ep = cfg.backends;
    Backends& b = env.backends;
    b.generator = ep.generator.empty()
                      ? std::shared_ptr<TextGenerator>(std::make_shared<ScriptedGenerator>(
                            generator.entries, generator.default_output, generator.model_id))
                      : std::make_shared<HttpTextGenerator>(ep.generator);
    b.describer = ep.describer.empty()
                      ? std::shared_ptr<MultimodalDescriber>(
                            std::make_shared<MockDescriber>(captions))
                      : std::make_shared<HttpDescriber>(ep.describer);
    b.scorer = ep.scorer.empty()
                   ? std::shared_ptr<TokenScorer>(std::make_shared<MockTokenScorer>(lexicons))
                   : std::make_shared<HttpTokenScorer>(ep.scorer);
    b.embedder = ep.embedder.empty()
                     ? std::shared_ptr<Embedder>(std::make_shared<HashEmbedder>())
                     : std::make_shared<HttpEmbedder>(ep.embedder);
    b.nli = ep.nli.empty()
                ? std::shared_ptr<PairScorer>(std::make_shared<JaccardNli>())
                : std::make_shared<HttpPairScorer>(ep.nli, BackendKind::nli_scorer);
    b.relevance = ep.relevance.empty()
                      ? std::shared_ptr<PairScorer>(std::make_shared<OverlapRelevance>())
                      : std::make_shared<HttpPairScorer>(ep.relevance, BackendKind::nli_scorer);
    b.search = ep.search.empty()
                   ? std::shared_ptr<TextSearch>(std::make_shared<FixtureTextSearch>(corpus))
                   : std::make_shared<HttpTextSearch>(ep.search);
    b.image_search = ep.image_search.empty()
                         ? std::shared_ptr<SimilarImageSearch>(
                               std::make_shared<MockSimilarImageSearch>(similar))
                         : std::make_shared<HttpSimilarImageSearch>(ep.image_search);
    b.text_safety = ep.text_safety.empty()
                        ? std::shared_ptr<TextSafetyClassifier>(
                              std::make_shared<BlocklistTextSafety>(blocklist))
                        : std::make_shared<HttpTextSafety>(ep.text_safety);
    b.image_safety = ep.image_safety.empty()
                         ? std::shared_ptr<ImageSafetyClassifier>(
                               std::make_shared<DigestImageSafety>(image_flags))
                         : std::make_shared<HttpImageSafety>(ep.image_safety);
    b.judge = ep.judge.empty()
                  ? std::shared_ptr<Judge>(std::make_shared<ReferenceOverlapJudge>())
                  : std::make_shared<HttpJudge>(ep.judge);

    // Templates.
    if (!cfg.paths.templates_dir.empty()) {
        auto templates = TemplateSet::load(cfg.paths.templates_dir);
        if (!templates.ok()) return templates.error();
        env.templates = templates.take();
    }

    // API registry + connectors.
    if (!cfg.paths.api_registry.empty()) {
        auto registry = load_api_registry(cfg.paths.api_registry);
        if (!registry.ok()) return registry.error();
        for (auto& entry : registry.take()) {
            env.apis.push_back(entry.descriptor);
            if (entry.endpoint.empty()) {
                env.connectors.add(entry.descriptor.id,
                                   std::make_shared<MockApiConnector>(
                                       entry.descriptor.id, entry.category,
                                       std::move(entry.catalog)));
            } else {
                env.connectors.add(entry.descriptor.id,
                                   std::make_shared<HttpApiConnector>(entry.endpoint,
                                                                      entry.descriptor.id));
            }
        }
    }

    // Instance database.
    if (!cfg.paths.instance_db.empty()) {
        if (std::filesystem::exists(cfg.paths.instance_db)) {
            auto db = load_instance_db(cfg.paths.instance_db);
            if (!db.ok()) return db.error();
            env.instance_db = db.take();
        } else {
            warn(warnings, "env", cfg.paths.instance_db + " not found; instance db starts empty");
        }
    }

    // Interaction log.
    auto log = load_interaction_log(cfg.paths.interaction_log, warnings);
    if (!log.ok()) return log.error();
    env.interaction_log = log.take();

    return loaded;
}

}  // namespace cuem
