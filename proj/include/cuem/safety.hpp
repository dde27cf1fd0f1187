#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cuem/backends.hpp"
#include "cuem/result.hpp"
#include "cuem/templates.hpp"
#include "cuem/types.hpp"

namespace cuem {

/// One row of the known-unsafe-query database: a query embedding plus the
/// safe response to serve when a live query lands near it.
struct InstanceFilterEntry {
    std::string id;
    std::string query_text;
    Embedding embedding;
    std::string canned_response;
};

Result<InstanceFilterEntry> make_instance_entry(std::string id, std::string query_text,
                                                std::string canned_response, Embedder& embedder,
                                                const CallCtx& ctx = {});

/// JSON-lines persistence for the instance database.
Result<void> save_instance_db(const std::vector<InstanceFilterEntry>& db,
                              const std::string& path);
Result<std::vector<InstanceFilterEntry>> load_instance_db(const std::string& path);

/// Pure nearest-neighbor helper: index of the entry with maximum cosine
/// similarity to the probe (ties by entry id ascending), or nullopt for an
/// empty database. Exposed separately so tests can oracle-check the filter.
std::optional<std::size_t> nearest_instance(const Embedding& probe,
                                            const std::vector<InstanceFilterEntry>& db,
                                            double* similarity_out = nullptr);

/// Cascade stage 3: serves the stored safe response when the query embeds
/// within `threshold` cosine similarity of a known-unsafe entry. No match —
/// including an empty database — means no verdict.
Result<std::optional<SafetyVerdict>> instance_filter(const MultimodalQuery& query,
                                                     const std::vector<InstanceFilterEntry>& db,
                                                     double threshold, Embedder& embedder,
                                                     const CallCtx& ctx = {});

/// Cascade stage 4: few-shot detector over the refined intention. The prompt
/// ends with the forced prefix {"safe_question": and the completion must
/// start "true" or "false"; anything else gets one retry and then blocks
/// (fail-closed), as does an unavailable generator.
SafetyVerdict multimodal_detect(const RefinedIntention& refined,
                                const std::vector<ChatTurn>& history, TextGenerator& generator,
                                const TemplateSet& templates, Warnings* warnings = nullptr,
                                const CallCtx& ctx = {});

/// Cascade stage 5: if any selected API is safety-relevant, serve its
/// category response. Among several, the highest likelihood wins, ties by
/// api_id ascending.
std::optional<SafetyVerdict> category_filter(const std::vector<ApiDecision>& decisions,
                                             const std::vector<ApiDescriptor>& apis);

/// Cascade stages 1–2: blocklist-style prefilters. Classifier failure or an
/// unrecognized image fails open (allow with warning); an unsafe signal
/// blocks.
SafetyVerdict text_prefilter(const std::string& text, TextSafetyClassifier& classifier,
                             Warnings* warnings = nullptr, const CallCtx& ctx = {});
SafetyVerdict image_prefilter(const ImageRef& image, ImageSafetyClassifier& classifier,
                              Warnings* warnings = nullptr, const CallCtx& ctx = {});

/// Everything the cascade needs beyond the query itself. The refined
/// intention and API decisions arrive from the pipeline stages that computed
/// them; the cascade only judges.
struct SafetyCascadeInput {
    RefinedIntention refined;
    std::vector<ApiDecision> decisions;
    std::vector<ApiDescriptor> apis;
};

struct SafetyCascadeResult {
    SafetyVerdict final;                 // the verdict that decided the outcome
    std::vector<SafetyVerdict> checked;  // every verdict in execution order
};

/// Runs the full fixed-order cascade [text_prefilter, image_prefilter,
/// instance, multimodal, category], short-circuiting at the first non-allow
/// verdict. Image stage is skipped for text-only queries; category runs only
/// when API decisions exist.
Result<SafetyCascadeResult> run_safety_cascade(const MultimodalQuery& query,
                                               const SafetyCascadeInput& input,
                                               const std::vector<InstanceFilterEntry>& db,
                                               const PipelineConfig& cfg,
                                               const Backends& backends,
                                               const TemplateSet& templates,
                                               Warnings* warnings = nullptr,
                                               const CallCtx& ctx = {});

}  // namespace cuem
