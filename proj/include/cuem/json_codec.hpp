#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "cuem/result.hpp"
#include "cuem/types.hpp"

namespace cuem {

// ---------------------------------------------------------------------------
// Canonical JSON for every domain type. nlohmann::json keeps object keys in
// alphabetical order, so dump() of these values is byte-stable; digest_of()
// hashes that canonical form. from_json counterparts return Result instead of
// throwing so callers keep the usual error idiom.
// ---------------------------------------------------------------------------

using Json = nlohmann::json;

Json to_json(const ImageRef& v);
Json to_json(const ChatTurn& v);
Json to_json(const MultimodalQuery& v);
Json to_json(const Document& v);
Json to_json(const ImageTag& v);
Json to_json(const ScoredDocument& v);
Json to_json(const ImageContext& v);
Json to_json(const RefinedIntention& v);
Json to_json(const SearchQuery& v);
Json to_json(const ApiDescriptor& v);
Json to_json(const ApiDecision& v);
Json to_json(const SafetyVerdict& v);
Json to_json(const PipelineConfig& v);
Json to_json(const StageRecord& v);
Json to_json(const PipelineTrace& v);

template <typename T>
Json to_json(const std::vector<T>& v) {
    Json arr = Json::array();
    for (const auto& item : v) arr.push_back(to_json(item));
    return arr;
}

Result<ImageRef> image_ref_from_json(const Json& j);
Result<ChatTurn> chat_turn_from_json(const Json& j);
Result<MultimodalQuery> query_from_json(const Json& j);
Result<Document> document_from_json(const Json& j);
Result<ImageTag> image_tag_from_json(const Json& j);
Result<ImageContext> image_context_from_json(const Json& j);
Result<RefinedIntention> refined_intention_from_json(const Json& j);
Result<SearchQuery> search_query_from_json(const Json& j);
Result<ApiDescriptor> api_descriptor_from_json(const Json& j);
Result<ApiDecision> api_decision_from_json(const Json& j);
Result<SafetyVerdict> safety_verdict_from_json(const Json& j);
Result<PipelineConfig> pipeline_config_from_json(const Json& j);
Result<StageRecord> stage_record_from_json(const Json& j);
Result<PipelineTrace> trace_from_json(const Json& j);

/// sha256 hex of a raw string; the digest primitive behind digest_of.
std::string digest_of_string(const std::string& s);

/// Canonical serialization: compact dump of the alphabetically-keyed object.
template <typename T>
std::string canonical_json(const T& v) {
    return to_json(v).dump();
}

/// sha256 hex of the canonical serialization.
template <typename T>
std::string digest_of(const T& v) {
    return digest_of_string(canonical_json(v));
}

/// Parses text into a Json value, mapping exceptions onto Errc::parse_error.
Result<Json> parse_json(std::string_view text);

}  // namespace cuem
