#include "cuem/http_backends.hpp"

#include <algorithm>
#include <chrono>
#include <utility>

#include "httplib.h"

#include "cuem/json_codec.hpp"

namespace cuem {

namespace {

constexpr std::chrono::milliseconds kDefaultBudget{5000};

std::chrono::milliseconds remaining_budget(const Deadline& deadline) {
    if (!deadline.at.has_value()) return kDefaultBudget;
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        *deadline.at - std::chrono::steady_clock::now());
    return std::max(std::chrono::milliseconds{1}, std::min(left, kDefaultBudget));
}

/// POSTs JSON to base_url + path and parses the JSON reply. Transport errors
/// and non-200 statuses become BackendUnavailable; a malformed 200 body
/// becomes ParseError.
Result<Json> post_json(const std::string& base_url, const std::string& path,
                       const Json& request, const Deadline& deadline) {
    httplib::Client client(base_url);
    const auto budget = remaining_budget(deadline);
    client.set_connection_timeout(budget);
    client.set_read_timeout(budget);
    client.set_write_timeout(budget);

    auto response = client.Post(path, request.dump(), "application/json");
    if (!response) {
        return make_error<Json>(Errc::backend_unavailable,
                                base_url + path + ": " + httplib::to_string(response.error()));
    }
    if (response->status != 200) {
        return make_error<Json>(Errc::backend_unavailable,
                                base_url + path + ": status " +
                                    std::to_string(response->status));
    }
    auto parsed = parse_json(response->body);
    if (!parsed.ok()) {
        return make_error<Json>(Errc::parse_error,
                                base_url + path + ": malformed response body");
    }
    return parsed;
}

/// Common entry guard: record the call, then bail out if the budget is gone.
template <typename T>
std::optional<Result<T>> guard(BackendKind kind, const CallCtx& ctx) {
    ctx.record(kind);
    if (ctx.deadline.expired()) {
        return make_error<T>(Errc::backend_unavailable, "deadline expired");
    }
    return std::nullopt;
}

Result<std::vector<Document>> documents_from(const Json& body) {
    if (!body.is_object() || !body.contains("documents") || !body["documents"].is_array()) {
        return make_error<std::vector<Document>>(Errc::parse_error,
                                                 "response needs a documents array");
    }
    std::vector<Document> docs;
    for (const auto& j : body["documents"]) {
        auto doc = document_from_json(j);
        if (!doc.ok()) return doc.error();
        docs.push_back(doc.take());
    }
    return docs;
}

template <typename T>
Result<T> field_of(const Json& body, const char* key) {
    if (!body.is_object() || !body.contains(key)) {
        return make_error<T>(Errc::parse_error, std::string("response missing ") + key);
    }
    try {
        return body[key].template get<T>();
    } catch (const std::exception&) {
        return make_error<T>(Errc::parse_error, std::string("response field ") + key +
                                                    " has the wrong type");
    }
}

}  // namespace

Result<void> probe_backend(const std::string& base_url) {
    httplib::Client client(base_url);
    client.set_connection_timeout(std::chrono::seconds(2));
    client.set_read_timeout(std::chrono::seconds(2));
    auto response = client.Get("/v1/health");
    if (!response || response->status != 200) {
        return make_error<void>(Errc::backend_unavailable, base_url + ": health probe failed");
    }
    return {};
}

HttpTextGenerator::HttpTextGenerator(std::string base_url, std::string model_id)
    : base_url_(std::move(base_url)), model_id_(std::move(model_id)) {}

Result<std::string> HttpTextGenerator::generate(const std::string& prompt,
                                                const DecodingParams& params,
                                                const CallCtx& ctx) {
    if (auto bail = guard<std::string>(BackendKind::text_generator, ctx)) return *bail;
    Json request;
    request["max_tokens"] = params.max_tokens;
    request["prompt"] = prompt;
    request["seed"] = params.seed;
    request["temperature"] = params.temperature;
    auto body = post_json(base_url_, "/v1/generate", request, ctx.deadline);
    if (!body.ok()) return body.error();
    return field_of<std::string>(body.value(), "text");
}

HttpDescriber::HttpDescriber(std::string base_url) : base_url_(std::move(base_url)) {}

Result<std::string> HttpDescriber::describe_image(const ImageRef& image, const CallCtx& ctx) {
    if (auto bail = guard<std::string>(BackendKind::multimodal_describer, ctx)) return *bail;
    Json request;
    request["image"] = to_json(image);
    auto body = post_json(base_url_, "/v1/describe", request, ctx.deadline);
    if (!body.ok()) return body.error();
    return field_of<std::string>(body.value(), "caption");
}

HttpTokenScorer::HttpTokenScorer(std::string base_url) : base_url_(std::move(base_url)) {}

Result<double> HttpTokenScorer::positive_likelihood(const std::string& prompt,
                                                    const std::string& positive_token,
                                                    const CallCtx& ctx) {
    if (auto bail = guard<double>(BackendKind::token_scorer, ctx)) return *bail;
    Json request;
    request["positive_token"] = positive_token;
    request["prompt"] = prompt;
    auto body = post_json(base_url_, "/v1/score_token", request, ctx.deadline);
    if (!body.ok()) return body.error();
    return field_of<double>(body.value(), "likelihood");
}

HttpEmbedder::HttpEmbedder(std::string base_url) : base_url_(std::move(base_url)) {}

Result<Embedding> HttpEmbedder::embed(const std::string& text, const CallCtx& ctx) {
    if (auto bail = guard<Embedding>(BackendKind::embedder, ctx)) return *bail;
    Json request;
    request["text"] = text;
    auto body = post_json(base_url_, "/v1/embed", request, ctx.deadline);
    if (!body.ok()) return body.error();
    auto values = field_of<std::vector<double>>(body.value(), "values");
    if (!values.ok()) return values.error();
    return Embedding{values.take()};
}

HttpPairScorer::HttpPairScorer(std::string base_url, BackendKind recorded_kind)
    : base_url_(std::move(base_url)), kind_(recorded_kind) {}

Result<double> HttpPairScorer::score_pair(const std::string& premise,
                                          const std::string& hypothesis, const CallCtx& ctx) {
    if (auto bail = guard<double>(kind_, ctx)) return *bail;
    Json request;
    request["hypothesis"] = hypothesis;
    request["premise"] = premise;
    auto body = post_json(base_url_, "/v1/score_pair", request, ctx.deadline);
    if (!body.ok()) return body.error();
    return field_of<double>(body.value(), "score");
}

HttpTextSearch::HttpTextSearch(std::string base_url) : base_url_(std::move(base_url)) {}

Result<std::vector<Document>> HttpTextSearch::text_search(
    const std::string& query, int k, const std::optional<std::string>& domain_filter,
    const CallCtx& ctx) {
    if (auto bail = guard<std::vector<Document>>(BackendKind::text_search, ctx)) return *bail;
    Json request;
    request["domain_filter"] = domain_filter.has_value() ? Json(*domain_filter) : Json(nullptr);
    request["k"] = k;
    request["query"] = query;
    auto body = post_json(base_url_, "/v1/search", request, ctx.deadline);
    if (!body.ok()) return body.error();
    return documents_from(body.value());
}

HttpSimilarImageSearch::HttpSimilarImageSearch(std::string base_url)
    : base_url_(std::move(base_url)) {}

Result<std::vector<ScoredDocument>> HttpSimilarImageSearch::similar_image_search(
    const ImageRef& image, int k, const CallCtx& ctx) {
    if (auto bail = guard<std::vector<ScoredDocument>>(BackendKind::similar_image_search, ctx)) {
        return *bail;
    }
    Json request;
    request["image"] = to_json(image);
    request["k"] = k;
    auto body = post_json(base_url_, "/v1/similar_images", request, ctx.deadline);
    if (!body.ok()) return body.error();
    const Json& reply = body.value();
    if (!reply.is_object() || !reply.contains("documents") || !reply["documents"].is_array()) {
        return make_error<std::vector<ScoredDocument>>(Errc::parse_error,
                                                       "response needs a documents array");
    }
    std::vector<ScoredDocument> docs;
    for (const auto& j : reply["documents"]) {
        if (!j.is_object() || !j.contains("doc") || !j.contains("similarity")) {
            return make_error<std::vector<ScoredDocument>>(
                Errc::parse_error, "scored document needs doc and similarity");
        }
        auto doc = document_from_json(j["doc"]);
        if (!doc.ok()) return doc.error();
        if (!j["similarity"].is_number()) {
            return make_error<std::vector<ScoredDocument>>(Errc::parse_error,
                                                           "similarity must be a number");
        }
        docs.push_back(ScoredDocument{doc.take(), j["similarity"].get<double>()});
    }
    return docs;
}

namespace {

Result<SafetySignal> signal_from(const Json& body) {
    auto unsafe = field_of<bool>(body, "unsafe");
    if (!unsafe.ok()) return unsafe.error();
    auto score = field_of<double>(body, "score");
    if (!score.ok()) return score.error();
    auto recognized = field_of<bool>(body, "recognized");
    if (!recognized.ok()) return recognized.error();
    return SafetySignal{unsafe.value(), score.value(), recognized.value()};
}

}  // namespace

HttpTextSafety::HttpTextSafety(std::string base_url) : base_url_(std::move(base_url)) {}

Result<SafetySignal> HttpTextSafety::classify_text_safety(const std::string& text,
                                                          const CallCtx& ctx) {
    if (auto bail = guard<SafetySignal>(BackendKind::text_safety_classifier, ctx)) return *bail;
    Json request;
    request["text"] = text;
    auto body = post_json(base_url_, "/v1/classify_text", request, ctx.deadline);
    if (!body.ok()) return body.error();
    return signal_from(body.value());
}

HttpImageSafety::HttpImageSafety(std::string base_url) : base_url_(std::move(base_url)) {}

Result<SafetySignal> HttpImageSafety::classify_image_safety(const ImageRef& image,
                                                            const CallCtx& ctx) {
    if (auto bail = guard<SafetySignal>(BackendKind::image_safety_classifier, ctx)) return *bail;
    Json request;
    request["image"] = to_json(image);
    auto body = post_json(base_url_, "/v1/classify_image", request, ctx.deadline);
    if (!body.ok()) return body.error();
    return signal_from(body.value());
}

HttpApiConnector::HttpApiConnector(std::string base_url, std::string api_id)
    : base_url_(std::move(base_url)), api_id_(std::move(api_id)) {}

Result<std::vector<Document>> HttpApiConnector::call(const std::string& search_query,
                                                     const CallCtx& ctx) {
    if (auto bail = guard<std::vector<Document>>(BackendKind::api_connector, ctx)) return *bail;
    Json request;
    request["api_id"] = api_id_;
    request["query"] = search_query;
    auto body = post_json(base_url_, "/v1/api_call", request, ctx.deadline);
    if (!body.ok()) return body.error();
    return documents_from(body.value());
}

HttpJudge::HttpJudge(std::string base_url) : base_url_(std::move(base_url)) {}

Result<std::string> HttpJudge::compare(const std::string& query, const std::string& first,
                                       const std::string& second, const std::string& reference,
                                       const CallCtx& ctx) {
    if (auto bail = guard<std::string>(BackendKind::judge, ctx)) return *bail;
    Json request;
    request["first"] = first;
    request["query"] = query;
    request["reference"] = reference;
    request["second"] = second;
    auto body = post_json(base_url_, "/v1/judge", request, ctx.deadline);
    if (!body.ok()) return body.error();
    return field_of<std::string>(body.value(), "verdict");
}

}  // namespace cuem
