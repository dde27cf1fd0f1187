#include "cuem/types.hpp"

#include <algorithm>
#include <map>

#include "cuem/digest.hpp"
#include "cuem/text.hpp"

namespace cuem {

const char* errc_name(Errc code) {
    switch (code) {
        case Errc::empty_query: return "empty_query";
        case Errc::malformed_history: return "malformed_history";
        case Errc::precondition: return "precondition";
        case Errc::backend_unavailable: return "backend_unavailable";
        case Errc::unknown_image: return "unknown_image";
        case Errc::missing_sentinel: return "missing_sentinel";
        case Errc::unknown_api: return "unknown_api";
        case Errc::connector_failure: return "connector_failure";
        case Errc::no_image: return "no_image";
        case Errc::enrichment_empty: return "enrichment_empty";
        case Errc::empty_reference: return "empty_reference";
        case Errc::parse_error: return "parse_error";
        case Errc::io_error: return "io_error";
        case Errc::invalid_config: return "invalid_config";
        case Errc::invalid_argument: return "invalid_argument";
    }
    return "unknown";
}

ImageRef image_ref_from_bytes(std::string id, std::string_view bytes, std::string media_type,
                              std::optional<std::string> source_uri) {
    ImageRef ref;
    ref.id = std::move(id);
    ref.content_digest = sha256_hex(bytes);
    ref.media_type = std::move(media_type);
    ref.source_uri = std::move(source_uri);
    return ref;
}

Result<MultimodalQuery> new_query(std::string text, std::optional<ImageRef> image,
                                  std::vector<ChatTurn> history, std::string locale) {
    const std::string trimmed = trim(text);
    if (trimmed.empty() && !image.has_value()) {
        return make_error<MultimodalQuery>(Errc::empty_query,
                                           "query needs non-blank text or an image");
    }
    for (std::size_t i = 1; i < history.size(); ++i) {
        if (history[i].role == history[i - 1].role) {
            return make_error<MultimodalQuery>(
                Errc::malformed_history,
                "history roles must alternate (turn " + std::to_string(i) + " repeats)");
        }
    }
    if (history.size() > kMaxHistoryTurns) {
        history.erase(history.begin(),
                      history.begin() + static_cast<std::ptrdiff_t>(history.size() - kMaxHistoryTurns));
    }
    MultimodalQuery q;
    q.text = trimmed;
    q.image = std::move(image);
    q.history = std::move(history);
    q.locale = std::move(locale);
    return q;
}

const char* doc_source_name(DocSource s) {
    switch (s) {
        case DocSource::web: return "web";
        case DocSource::shopping: return "shopping";
        case DocSource::map: return "map";
        case DocSource::image_index: return "image_index";
        case DocSource::instance_db: return "instance_db";
    }
    return "web";
}

Result<DocSource> doc_source_from_name(std::string_view name) {
    if (name == "web") return DocSource::web;
    if (name == "shopping") return DocSource::shopping;
    if (name == "map") return DocSource::map;
    if (name == "image_index") return DocSource::image_index;
    if (name == "instance_db") return DocSource::instance_db;
    return make_error<DocSource>(Errc::parse_error, "unknown doc source: " + std::string(name));
}

const char* tag_origin_name(TagOrigin o) {
    switch (o) {
        case TagOrigin::interaction: return "interaction";
        case TagOrigin::extracted: return "extracted";
        case TagOrigin::annotated: return "annotated";
    }
    return "extracted";
}

Result<TagOrigin> tag_origin_from_name(std::string_view name) {
    if (name == "interaction") return TagOrigin::interaction;
    if (name == "extracted") return TagOrigin::extracted;
    if (name == "annotated") return TagOrigin::annotated;
    return make_error<TagOrigin>(Errc::parse_error, "unknown tag origin: " + std::string(name));
}

int tag_origin_priority(TagOrigin o) {
    switch (o) {
        case TagOrigin::annotated: return 3;
        case TagOrigin::interaction: return 2;
        case TagOrigin::extracted: return 1;
    }
    return 1;
}

std::vector<ImageTag> normalize_tags(std::vector<ImageTag> tags) {
    std::map<std::string, ImageTag> best;
    for (auto& t : tags) {
        t.tag = to_lower(trim(t.tag));
        if (t.tag.empty()) continue;
        auto it = best.find(t.tag);
        if (it == best.end()) {
            best.emplace(t.tag, std::move(t));
            continue;
        }
        const int held = tag_origin_priority(it->second.origin);
        const int incoming = tag_origin_priority(t.origin);
        if (incoming > held || (incoming == held && t.weight > it->second.weight)) {
            it->second = std::move(t);
        }
    }
    std::vector<ImageTag> out;
    out.reserve(best.size());
    for (auto& [_, t] : best) out.push_back(std::move(t));
    std::sort(out.begin(), out.end(), [](const ImageTag& a, const ImageTag& b) {
        if (a.weight != b.weight) return a.weight > b.weight;
        return a.tag < b.tag;
    });
    return out;
}

ImageContext make_image_context(std::string description, std::vector<ImageTag> tags,
                                std::vector<ScoredDocument> similar_docs) {
    ImageContext ctx;
    ctx.description = std::move(description);
    ctx.tags = normalize_tags(std::move(tags));
    std::sort(similar_docs.begin(), similar_docs.end(),
              [](const ScoredDocument& a, const ScoredDocument& b) {
                  if (a.similarity != b.similarity) return a.similarity > b.similarity;
                  return a.doc.id < b.doc.id;
              });
    ctx.similar_docs = std::move(similar_docs);
    return ctx;
}

const char* query_origin_name(QueryOrigin o) {
    switch (o) {
        case QueryOrigin::tag_search: return "tag_search";
        case QueryOrigin::refined: return "refined";
        case QueryOrigin::supplementary: return "supplementary";
    }
    return "refined";
}

Result<ApiDescriptor> make_api_descriptor(std::string id, std::string name, std::string description,
                                          bool safety_relevant,
                                          std::optional<std::string> category_response) {
    if (trim(id).empty()) {
        return make_error<ApiDescriptor>(Errc::invalid_argument, "api id must be non-blank");
    }
    if (safety_relevant && (!category_response.has_value() || trim(*category_response).empty())) {
        return make_error<ApiDescriptor>(
            Errc::invalid_argument, "safety-relevant api '" + id + "' needs a category response");
    }
    ApiDescriptor d;
    d.id = std::move(id);
    d.name = std::move(name);
    d.description = std::move(description);
    d.safety_relevant = safety_relevant;
    d.category_response = std::move(category_response);
    return d;
}

bool decision_before(const ApiDecision& a, const ApiDecision& b) {
    if (a.positive_likelihood != b.positive_likelihood) {
        return a.positive_likelihood > b.positive_likelihood;
    }
    return a.api_id < b.api_id;
}

const char* safety_stage_name(SafetyStage s) {
    switch (s) {
        case SafetyStage::text_prefilter: return "text_prefilter";
        case SafetyStage::image_prefilter: return "image_prefilter";
        case SafetyStage::instance: return "instance";
        case SafetyStage::multimodal: return "multimodal";
        case SafetyStage::category: return "category";
    }
    return "text_prefilter";
}

const char* safety_decision_name(SafetyDecision d) {
    switch (d) {
        case SafetyDecision::allow: return "allow";
        case SafetyDecision::block: return "block";
        case SafetyDecision::canned: return "canned";
    }
    return "allow";
}

Result<SafetyVerdict> make_safety_verdict(SafetyStage stage, SafetyDecision decision,
                                          std::optional<std::string> canned_response,
                                          std::optional<double> score) {
    if (decision == SafetyDecision::canned &&
        (!canned_response.has_value() || canned_response->empty())) {
        return make_error<SafetyVerdict>(Errc::invalid_argument,
                                         "canned verdict needs a canned response");
    }
    if (decision != SafetyDecision::canned && canned_response.has_value()) {
        return make_error<SafetyVerdict>(Errc::invalid_argument,
                                         "only canned verdicts carry a canned response");
    }
    SafetyVerdict v;
    v.stage = stage;
    v.decision = decision;
    v.canned_response = std::move(canned_response);
    v.score = score;
    return v;
}

Result<void> validate_config(const PipelineConfig& cfg) {
    if (cfg.k_top_docs < 1) {
        return make_error<void>(Errc::invalid_config, "k_top_docs must be >= 1");
    }
    if (cfg.max_supplementary_queries < 1 || cfg.max_supplementary_queries > 3) {
        return make_error<void>(Errc::invalid_config, "max_supplementary_queries must be in [1,3]");
    }
    if (cfg.api_threshold < 0.0 || cfg.api_threshold > 1.0) {
        return make_error<void>(Errc::invalid_config, "api_threshold must be in [0,1]");
    }
    if (cfg.instance_similarity_threshold < 0.0 || cfg.instance_similarity_threshold > 1.0) {
        return make_error<void>(Errc::invalid_config,
                                "instance_similarity_threshold must be in [0,1]");
    }
    if (cfg.annotated_tag_similarity_threshold < 0.0 ||
        cfg.annotated_tag_similarity_threshold > 1.0) {
        return make_error<void>(Errc::invalid_config,
                                "annotated_tag_similarity_threshold must be in [0,1]");
    }
    if (cfg.summary_char_budget < 1) {
        return make_error<void>(Errc::invalid_config, "summary_char_budget must be >= 1");
    }
    if (trim(cfg.directive_sentinel).empty()) {
        return make_error<void>(Errc::invalid_config, "directive_sentinel must be non-blank");
    }
    return Result<void>{};
}

Result<PipelineTrace> trace_append(const PipelineTrace& trace, StageRecord record) {
    if (record.stage_name.empty()) {
        return make_error<PipelineTrace>(Errc::invalid_argument, "stage record needs a name");
    }
    if (record.input_digest.empty() || record.output_digest.empty()) {
        return make_error<PipelineTrace>(Errc::invalid_argument,
                                         "stage record needs input and output digests");
    }
    PipelineTrace next = trace;
    next.stages.push_back(std::move(record));
    return next;
}

void warn(Warnings* sink, std::string_view stage, std::string_view message) {
    if (sink == nullptr) return;
    std::string line;
    line.reserve(stage.size() + message.size() + 2);
    line.append(stage).append(": ").append(message);
    sink->push_back(std::move(line));
}

}  // namespace cuem
