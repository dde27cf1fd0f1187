#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cuem/result.hpp"

namespace cuem {

// ---------------------------------------------------------------------------
// Domain types. All of them are immutable value records once built; the
// validated factories below are the only sanctioned construction paths.
// ---------------------------------------------------------------------------

struct ImageRef {
    std::string id;
    std::string content_digest;  // sha256 hex of the raw bytes
    std::string media_type;
    std::optional<std::string> source_uri;

    friend bool operator==(const ImageRef& a, const ImageRef& b) {
        return a.content_digest == b.content_digest;
    }
};

/// Builds an ImageRef whose digest is derived from the byte content.
ImageRef image_ref_from_bytes(std::string id, std::string_view bytes, std::string media_type,
                              std::optional<std::string> source_uri = std::nullopt);

enum class Role { user, assistant };

struct ChatTurn {
    Role role;
    std::string utterance;
};

struct MultimodalQuery {
    std::string text;
    std::optional<ImageRef> image;
    std::vector<ChatTurn> history;
    std::string locale = "en";
};

inline constexpr std::size_t kMaxHistoryTurns = 20;

/// Validated entry point for queries. Text may be blank only when an image is
/// present; history roles must alternate. Histories longer than
/// kMaxHistoryTurns are trimmed from the oldest end.
Result<MultimodalQuery> new_query(std::string text, std::optional<ImageRef> image,
                                  std::vector<ChatTurn> history = {}, std::string locale = "en");

enum class DocSource { web, shopping, map, image_index, instance_db };

const char* doc_source_name(DocSource s);
Result<DocSource> doc_source_from_name(std::string_view name);

struct Document {
    std::string id;
    std::string title;
    std::string body;
    std::optional<std::string> summary;
    DocSource source = DocSource::web;
    std::optional<std::string> url;
    double retrieval_score = 0.0;
    std::optional<double> relevance_score;  // set only by the relevance stage
};

enum class TagOrigin { interaction, extracted, annotated };

const char* tag_origin_name(TagOrigin o);
Result<TagOrigin> tag_origin_from_name(std::string_view name);

/// Priority used when the same tag arrives from several origins.
int tag_origin_priority(TagOrigin o);

struct ImageTag {
    std::string tag;      // case-folded
    double weight = 0.0;  // origin priority x source score
    TagOrigin origin = TagOrigin::extracted;
};

struct ScoredDocument {
    Document doc;
    double similarity = 0.0;  // in [0,1]
};

struct ImageContext {
    std::string description;
    std::vector<ImageTag> tags;  // weight desc, ties lexicographic asc; deduplicated
    std::vector<ScoredDocument> similar_docs;
};

/// Case-folds, deduplicates (highest-priority origin wins, then max weight)
/// and sorts the tag list into its canonical order.
std::vector<ImageTag> normalize_tags(std::vector<ImageTag> tags);

/// Normalizing constructor for ImageContext; similar_docs are sorted by
/// similarity descending (ties by document id ascending).
ImageContext make_image_context(std::string description, std::vector<ImageTag> tags,
                                std::vector<ScoredDocument> similar_docs);

struct RefinedIntention {
    std::string intent_text;   // contains the directive sentinel; the directive is its tail
    std::string search_query;  // non-empty
    std::vector<std::string> used_doc_ids;
    bool used_caption = false;
};

enum class QueryOrigin { tag_search, refined, supplementary };

const char* query_origin_name(QueryOrigin o);

struct SearchQuery {
    std::string text;  // non-empty
    QueryOrigin origin = QueryOrigin::refined;
    int rank = 0;  // unique within one generation batch
};

struct ApiDescriptor {
    std::string id;
    std::string name;
    std::string description;
    bool safety_relevant = false;
    std::optional<std::string> category_response;  // required when safety_relevant
};

Result<ApiDescriptor> make_api_descriptor(std::string id, std::string name, std::string description,
                                          bool safety_relevant,
                                          std::optional<std::string> category_response);

struct ApiDecision {
    std::string api_id;
    double positive_likelihood = 0.0;  // in [0,1]
    bool selected = false;             // likelihood >= configured threshold
};

/// Total order: likelihood descending, then api_id ascending.
bool decision_before(const ApiDecision& a, const ApiDecision& b);

enum class SafetyStage { text_prefilter, image_prefilter, instance, multimodal, category };

const char* safety_stage_name(SafetyStage s);

enum class SafetyDecision { allow, block, canned };

const char* safety_decision_name(SafetyDecision d);

struct SafetyVerdict {
    SafetyStage stage = SafetyStage::text_prefilter;
    SafetyDecision decision = SafetyDecision::allow;
    std::optional<std::string> canned_response;  // required when decision == canned
    std::optional<double> score;
};

Result<SafetyVerdict> make_safety_verdict(SafetyStage stage, SafetyDecision decision,
                                          std::optional<std::string> canned_response = std::nullopt,
                                          std::optional<double> score = std::nullopt);

struct PipelineConfig {
    int k_top_docs = 5;
    int max_supplementary_queries = 3;
    double api_threshold = 0.5;
    double instance_similarity_threshold = 0.92;
    double annotated_tag_similarity_threshold = 0.9;
    int summary_char_budget = 800;
    std::string directive_sentinel = "You must search";
};

Result<void> validate_config(const PipelineConfig& cfg);

struct StageRecord {
    std::string stage_name;
    std::string input_digest;
    std::string output_digest;
    std::int64_t backend_calls = 0;
    std::int64_t elapsed_ms = 0;
};

struct PipelineTrace {
    std::string trace_id;
    std::vector<StageRecord> stages;  // execution order
    std::vector<SafetyVerdict> verdicts;
    std::vector<std::string> warnings;  // "stage: message" entries from degraded sub-steps
};

/// Returns a copy of the trace with one more stage record. The input trace is
/// left untouched.
Result<PipelineTrace> trace_append(const PipelineTrace& trace, StageRecord record);

/// Warning sink threaded through operations that are allowed to degrade.
using Warnings = std::vector<std::string>;

void warn(Warnings* sink, std::string_view stage, std::string_view message);

}  // namespace cuem
