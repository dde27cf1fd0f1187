#include "cuem/json_codec.hpp"

#include "cuem/digest.hpp"

namespace cuem {
namespace {

// Field accessors that surface missing/mistyped keys as parse errors instead
// of nlohmann exceptions.

template <typename T>
Result<T> field(const Json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) {
        return make_error<T>(Errc::parse_error, std::string("missing field: ") + key);
    }
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception& e) {
        return make_error<T>(Errc::parse_error,
                             std::string("bad field '") + key + "': " + e.what());
    }
}

template <typename T>
T field_or(const Json& j, const char* key, T fallback) {
    if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception&) {
        return fallback;
    }
}

template <typename T>
std::optional<T> opt_field(const Json& j, const char* key) {
    if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return std::nullopt;
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception&) {
        return std::nullopt;
    }
}

}  // namespace

Json to_json(const ImageRef& v) {
    Json j{{"content_digest", v.content_digest}, {"id", v.id}, {"media_type", v.media_type}};
    if (v.source_uri) j["source_uri"] = *v.source_uri;
    return j;
}

Json to_json(const ChatTurn& v) {
    return Json{{"role", v.role == Role::user ? "user" : "assistant"}, {"utterance", v.utterance}};
}

Json to_json(const MultimodalQuery& v) {
    Json j{{"locale", v.locale}, {"text", v.text}};
    if (v.image) j["image"] = to_json(*v.image);
    Json hist = Json::array();
    for (const auto& t : v.history) hist.push_back(to_json(t));
    j["history"] = std::move(hist);
    return j;
}

Json to_json(const Document& v) {
    Json j{{"body", v.body},
           {"id", v.id},
           {"retrieval_score", v.retrieval_score},
           {"source", doc_source_name(v.source)},
           {"title", v.title}};
    if (v.summary) j["summary"] = *v.summary;
    if (v.url) j["url"] = *v.url;
    if (v.relevance_score) j["relevance_score"] = *v.relevance_score;
    return j;
}

Json to_json(const ImageTag& v) {
    return Json{{"origin", tag_origin_name(v.origin)}, {"tag", v.tag}, {"weight", v.weight}};
}

Json to_json(const ScoredDocument& v) {
    return Json{{"doc", to_json(v.doc)}, {"similarity", v.similarity}};
}

Json to_json(const ImageContext& v) {
    Json tags = Json::array();
    for (const auto& t : v.tags) tags.push_back(to_json(t));
    Json sims = Json::array();
    for (const auto& s : v.similar_docs) sims.push_back(to_json(s));
    return Json{{"description", v.description}, {"similar_docs", std::move(sims)},
                {"tags", std::move(tags)}};
}

Json to_json(const RefinedIntention& v) {
    return Json{{"intent_text", v.intent_text},
                {"search_query", v.search_query},
                {"used_caption", v.used_caption},
                {"used_doc_ids", v.used_doc_ids}};
}

Json to_json(const SearchQuery& v) {
    return Json{{"origin", query_origin_name(v.origin)}, {"rank", v.rank}, {"text", v.text}};
}

Json to_json(const ApiDescriptor& v) {
    Json j{{"description", v.description},
           {"id", v.id},
           {"name", v.name},
           {"safety_relevant", v.safety_relevant}};
    if (v.category_response) j["category_response"] = *v.category_response;
    return j;
}

Json to_json(const ApiDecision& v) {
    return Json{{"api_id", v.api_id},
                {"positive_likelihood", v.positive_likelihood},
                {"selected", v.selected}};
}

Json to_json(const SafetyVerdict& v) {
    Json j{{"decision", safety_decision_name(v.decision)}, {"stage", safety_stage_name(v.stage)}};
    if (v.canned_response) j["canned_response"] = *v.canned_response;
    if (v.score) j["score"] = *v.score;
    return j;
}

Json to_json(const PipelineConfig& v) {
    return Json{{"annotated_tag_similarity_threshold", v.annotated_tag_similarity_threshold},
                {"api_threshold", v.api_threshold},
                {"directive_sentinel", v.directive_sentinel},
                {"instance_similarity_threshold", v.instance_similarity_threshold},
                {"k_top_docs", v.k_top_docs},
                {"max_supplementary_queries", v.max_supplementary_queries},
                {"summary_char_budget", v.summary_char_budget}};
}

Json to_json(const StageRecord& v) {
    return Json{{"backend_calls", v.backend_calls},
                {"elapsed_ms", v.elapsed_ms},
                {"input_digest", v.input_digest},
                {"output_digest", v.output_digest},
                {"stage_name", v.stage_name}};
}

Json to_json(const PipelineTrace& v) {
    Json stages = Json::array();
    for (const auto& s : v.stages) stages.push_back(to_json(s));
    Json verdicts = Json::array();
    for (const auto& s : v.verdicts) verdicts.push_back(to_json(s));
    return Json{{"stages", std::move(stages)},
                {"trace_id", v.trace_id},
                {"verdicts", std::move(verdicts)},
                {"warnings", v.warnings}};
}

Result<ImageRef> image_ref_from_json(const Json& j) {
    auto id = field<std::string>(j, "id");
    if (!id.ok()) return id.error();
    auto digest = field<std::string>(j, "content_digest");
    if (!digest.ok()) return digest.error();
    ImageRef ref;
    ref.id = id.take();
    ref.content_digest = digest.take();
    ref.media_type = field_or<std::string>(j, "media_type", "image/jpeg");
    ref.source_uri = opt_field<std::string>(j, "source_uri");
    return ref;
}

Result<ChatTurn> chat_turn_from_json(const Json& j) {
    auto role = field<std::string>(j, "role");
    if (!role.ok()) return role.error();
    auto text = field<std::string>(j, "utterance");
    if (!text.ok()) return text.error();
    ChatTurn t;
    if (role.value() == "user") {
        t.role = Role::user;
    } else if (role.value() == "assistant") {
        t.role = Role::assistant;
    } else {
        return make_error<ChatTurn>(Errc::parse_error, "unknown role: " + role.value());
    }
    t.utterance = text.take();
    return t;
}

Result<MultimodalQuery> query_from_json(const Json& j) {
    auto text = field<std::string>(j, "text");
    if (!text.ok()) return text.error();
    std::optional<ImageRef> image;
    if (j.contains("image") && !j.at("image").is_null()) {
        auto r = image_ref_from_json(j.at("image"));
        if (!r.ok()) return r.error();
        image = r.take();
    }
    std::vector<ChatTurn> history;
    if (j.contains("history") && j.at("history").is_array()) {
        for (const auto& t : j.at("history")) {
            auto r = chat_turn_from_json(t);
            if (!r.ok()) return r.error();
            history.push_back(r.take());
        }
    }
    return new_query(text.take(), std::move(image), std::move(history),
                     field_or<std::string>(j, "locale", "en"));
}

Result<Document> document_from_json(const Json& j) {
    auto id = field<std::string>(j, "id");
    if (!id.ok()) return id.error();
    Document d;
    d.id = id.take();
    d.title = field_or<std::string>(j, "title", "");
    d.body = field_or<std::string>(j, "body", "");
    d.summary = opt_field<std::string>(j, "summary");
    auto src = doc_source_from_name(field_or<std::string>(j, "source", "web"));
    if (!src.ok()) return src.error();
    d.source = src.value();
    d.url = opt_field<std::string>(j, "url");
    d.retrieval_score = field_or<double>(j, "retrieval_score", 0.0);
    d.relevance_score = opt_field<double>(j, "relevance_score");
    return d;
}

Result<ImageTag> image_tag_from_json(const Json& j) {
    auto tag = field<std::string>(j, "tag");
    if (!tag.ok()) return tag.error();
    auto origin = tag_origin_from_name(field_or<std::string>(j, "origin", "extracted"));
    if (!origin.ok()) return origin.error();
    ImageTag t;
    t.tag = tag.take();
    t.weight = field_or<double>(j, "weight", 0.0);
    t.origin = origin.value();
    return t;
}

Result<ImageContext> image_context_from_json(const Json& j) {
    auto desc = field<std::string>(j, "description");
    if (!desc.ok()) return desc.error();
    std::vector<ImageTag> tags;
    if (j.contains("tags") && j.at("tags").is_array()) {
        for (const auto& t : j.at("tags")) {
            auto r = image_tag_from_json(t);
            if (!r.ok()) return r.error();
            tags.push_back(r.take());
        }
    }
    std::vector<ScoredDocument> sims;
    if (j.contains("similar_docs") && j.at("similar_docs").is_array()) {
        for (const auto& s : j.at("similar_docs")) {
            auto doc = document_from_json(s.contains("doc") ? s.at("doc") : s);
            if (!doc.ok()) return doc.error();
            ScoredDocument sd;
            sd.doc = doc.take();
            sd.similarity = field_or<double>(s, "similarity", 0.0);
            sims.push_back(std::move(sd));
        }
    }
    return make_image_context(desc.take(), std::move(tags), std::move(sims));
}

Result<RefinedIntention> refined_intention_from_json(const Json& j) {
    auto intent = field<std::string>(j, "intent_text");
    if (!intent.ok()) return intent.error();
    auto query = field<std::string>(j, "search_query");
    if (!query.ok()) return query.error();
    RefinedIntention r;
    r.intent_text = intent.take();
    r.search_query = query.take();
    r.used_doc_ids = field_or<std::vector<std::string>>(j, "used_doc_ids", {});
    r.used_caption = field_or<bool>(j, "used_caption", false);
    return r;
}

Result<SearchQuery> search_query_from_json(const Json& j) {
    auto text = field<std::string>(j, "text");
    if (!text.ok()) return text.error();
    SearchQuery q;
    q.text = text.take();
    const std::string origin = field_or<std::string>(j, "origin", "refined");
    if (origin == "tag_search") {
        q.origin = QueryOrigin::tag_search;
    } else if (origin == "refined") {
        q.origin = QueryOrigin::refined;
    } else if (origin == "supplementary") {
        q.origin = QueryOrigin::supplementary;
    } else {
        return make_error<SearchQuery>(Errc::parse_error, "unknown query origin: " + origin);
    }
    q.rank = field_or<int>(j, "rank", 0);
    return q;
}

Result<ApiDescriptor> api_descriptor_from_json(const Json& j) {
    auto id = field<std::string>(j, "id");
    if (!id.ok()) return id.error();
    return make_api_descriptor(id.take(), field_or<std::string>(j, "name", ""),
                               field_or<std::string>(j, "description", ""),
                               field_or<bool>(j, "safety_relevant", false),
                               opt_field<std::string>(j, "category_response"));
}

Result<ApiDecision> api_decision_from_json(const Json& j) {
    auto id = field<std::string>(j, "api_id");
    if (!id.ok()) return id.error();
    ApiDecision d;
    d.api_id = id.take();
    d.positive_likelihood = field_or<double>(j, "positive_likelihood", 0.0);
    d.selected = field_or<bool>(j, "selected", false);
    return d;
}

Result<SafetyVerdict> safety_verdict_from_json(const Json& j) {
    auto stage_name = field<std::string>(j, "stage");
    if (!stage_name.ok()) return stage_name.error();
    auto decision_name = field<std::string>(j, "decision");
    if (!decision_name.ok()) return decision_name.error();
    SafetyStage stage;
    const std::string& sn = stage_name.value();
    if (sn == "text_prefilter") {
        stage = SafetyStage::text_prefilter;
    } else if (sn == "image_prefilter") {
        stage = SafetyStage::image_prefilter;
    } else if (sn == "instance") {
        stage = SafetyStage::instance;
    } else if (sn == "multimodal") {
        stage = SafetyStage::multimodal;
    } else if (sn == "category") {
        stage = SafetyStage::category;
    } else {
        return make_error<SafetyVerdict>(Errc::parse_error, "unknown safety stage: " + sn);
    }
    SafetyDecision decision;
    const std::string& dn = decision_name.value();
    if (dn == "allow") {
        decision = SafetyDecision::allow;
    } else if (dn == "block") {
        decision = SafetyDecision::block;
    } else if (dn == "canned") {
        decision = SafetyDecision::canned;
    } else {
        return make_error<SafetyVerdict>(Errc::parse_error, "unknown safety decision: " + dn);
    }
    return make_safety_verdict(stage, decision, opt_field<std::string>(j, "canned_response"),
                               opt_field<double>(j, "score"));
}

Result<PipelineConfig> pipeline_config_from_json(const Json& j) {
    PipelineConfig cfg;
    cfg.k_top_docs = field_or<int>(j, "k_top_docs", cfg.k_top_docs);
    cfg.max_supplementary_queries =
        field_or<int>(j, "max_supplementary_queries", cfg.max_supplementary_queries);
    cfg.api_threshold = field_or<double>(j, "api_threshold", cfg.api_threshold);
    cfg.instance_similarity_threshold =
        field_or<double>(j, "instance_similarity_threshold", cfg.instance_similarity_threshold);
    cfg.annotated_tag_similarity_threshold = field_or<double>(
        j, "annotated_tag_similarity_threshold", cfg.annotated_tag_similarity_threshold);
    cfg.summary_char_budget = field_or<int>(j, "summary_char_budget", cfg.summary_char_budget);
    cfg.directive_sentinel = field_or<std::string>(j, "directive_sentinel", cfg.directive_sentinel);
    if (auto v = validate_config(cfg); !v.ok()) return v.error();
    return cfg;
}

Result<StageRecord> stage_record_from_json(const Json& j) {
    auto name = field<std::string>(j, "stage_name");
    if (!name.ok()) return name.error();
    StageRecord r;
    r.stage_name = name.take();
    r.input_digest = field_or<std::string>(j, "input_digest", "");
    r.output_digest = field_or<std::string>(j, "output_digest", "");
    r.backend_calls = field_or<std::int64_t>(j, "backend_calls", 0);
    r.elapsed_ms = field_or<std::int64_t>(j, "elapsed_ms", 0);
    return r;
}

Result<PipelineTrace> trace_from_json(const Json& j) {
    auto id = field<std::string>(j, "trace_id");
    if (!id.ok()) return id.error();
    PipelineTrace t;
    t.trace_id = id.take();
    if (j.contains("stages") && j.at("stages").is_array()) {
        for (const auto& s : j.at("stages")) {
            auto r = stage_record_from_json(s);
            if (!r.ok()) return r.error();
            t.stages.push_back(r.take());
        }
    }
    if (j.contains("verdicts") && j.at("verdicts").is_array()) {
        for (const auto& v : j.at("verdicts")) {
            auto r = safety_verdict_from_json(v);
            if (!r.ok()) return r.error();
            t.verdicts.push_back(r.take());
        }
    }
    t.warnings = field_or<std::vector<std::string>>(j, "warnings", {});
    return t;
}

std::string digest_of_string(const std::string& s) { return sha256_hex(s); }

Result<Json> parse_json(std::string_view text) {
    try {
        return Json::parse(text);
    } catch (const Json::exception& e) {
        return make_error<Json>(Errc::parse_error, std::string("json parse failed: ") + e.what());
    }
}

}  // namespace cuem
