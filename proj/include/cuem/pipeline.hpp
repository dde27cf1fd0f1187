#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "cuem/api_select.hpp"
#include "cuem/backends.hpp"
#include "cuem/enrichment.hpp"
#include "cuem/json_codec.hpp"
#include "cuem/result.hpp"
#include "cuem/safety.hpp"
#include "cuem/templates.hpp"
#include "cuem/types.hpp"

namespace cuem {

struct Answer {
    std::string text;
    std::vector<std::string> cited_doc_ids;  // subset of the curated set, first-use order
    std::string model_id;
};

struct PipelineResult {
    std::optional<Answer> answer;  // present iff safety.decision == allow
    SafetyVerdict safety;
    PipelineTrace trace;
    std::vector<Document> curated_docs;  // the top-k set the answer drew from
};

Json to_json(const Answer& v);
Json to_json(const PipelineResult& v);
Result<Answer> answer_from_json(const Json& j);
Result<PipelineResult> pipeline_result_from_json(const Json& j);

/// Everything a pipeline run consumes besides the query: model backends,
/// prompt templates, the API registry with its connectors, the unsafe-query
/// database, and the image interaction log. Read-only during requests.
struct PipelineEnv {
    Backends backends;
    TemplateSet templates = TemplateSet::builtin();
    std::vector<ApiDescriptor> apis;
    ConnectorRegistry connectors;
    std::vector<InstanceFilterEntry> instance_db;
    std::vector<InteractionRecord> interaction_log;
};

/// Per-run switches. The two enable flags exist for component-contribution
/// measurements: disabling the refiner falls back to the raw user text as the
/// search intention, disabling the query generator skips supplementary
/// queries entirely.
struct RunOptions {
    bool enable_refiner = true;
    bool enable_query_generator = true;
    Deadline deadline = Deadline::none();
    CallLedger* ledger = nullptr;  // observability hook; the run tallies backend calls here
};

/// Canonical stage order; every trace's stage names are a subsequence.
inline constexpr std::array<std::string_view, 15> kPipelineStageOrder{
    "text_prefilter",   "image_prefilter", "enrichment",      "summarize",
    "refine",           "instance_safety", "multimodal_safety", "query_generation",
    "supplementary_search", "api_selection", "category_safety", "dispatch",
    "merge",            "relevance",       "answer"};

/// Final stage: renders the answer prompt over the curated documents and
/// sanitizes citations — [doc:<id>] markers whose id is not in the curated
/// set are stripped from the text with a warning. With no documents the call
/// must be made in explicit no-evidence mode and returns an uncited answer.
Result<Answer> generate_answer(const MultimodalQuery& query, const std::vector<Document>& docs,
                               const TemplateSet& templates, TextGenerator& generator,
                               bool no_evidence = false, Warnings* warnings = nullptr,
                               const CallCtx& ctx = {});

/// Deduplicates by id keeping the max retrieval_score, ordered by
/// (score desc, id asc).
std::vector<Document> merge_documents(const std::vector<std::vector<Document>>& sets);

/// The end-to-end orchestrator. Safety stages interleave with processing in
/// the canonical order; the first block/canned verdict ends the run without
/// an answer. Stage failures degrade with trace warnings; the only errors
/// surfaced are an invalid query and an unavailable generator at the final
/// answer stage (everything earlier has a fallback, the answer does not).
Result<PipelineResult> run_pipeline(const MultimodalQuery& query, const PipelineConfig& cfg,
                                    const PipelineEnv& env, const RunOptions& options = {});

}  // namespace cuem
