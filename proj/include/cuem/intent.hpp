#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cuem/backends.hpp"
#include "cuem/result.hpp"
#include "cuem/templates.hpp"
#include "cuem/types.hpp"

namespace cuem {

/// Per-document summaries for prompt context: the stored summary when one
/// exists, otherwise the leading body text, each truncated at a word boundary
/// to budget/|docs| characters so the total stays within budget.
Result<std::vector<std::pair<std::string, std::string>>> summarize_documents(
    const std::vector<Document>& docs, int budget);

/// Extracts the refined intention from raw generator output. The output must
/// contain the directive sentinel (last occurrence wins); the search query is
/// the clause after it, trimmed of the closing "~" and punctuation.
Result<RefinedIntention> parse_refinement(const std::string& raw, const std::string& sentinel);

/// Deterministic stand-in when refinement is skipped or fails: the user text
/// (or caption for image-only queries) becomes both intention and query.
RefinedIntention fallback_intention(const MultimodalQuery& query, const std::string& caption,
                                    const PipelineConfig& cfg);

/// Stage 2: renders the refiner prompt, calls the generator, parses. One
/// retry with a repair instruction on parse failure; after that the fallback
/// intention is returned with a warning. With nothing to refine against
/// (no caption, no summaries) the fallback is returned without a call.
Result<RefinedIntention> refine_intention(
    const MultimodalQuery& query, const std::string& caption,
    const std::vector<std::pair<std::string, std::string>>& summaries, const PipelineConfig& cfg,
    TextGenerator& generator, const TemplateSet& templates, Warnings* warnings = nullptr,
    const CallCtx& ctx = {});

/// Stage 3: asks the generator for supplementary queries. Output lines
/// prefixed "QUERY:" become queries; anything beyond the configured maximum
/// is dropped with a warning. Empty output is valid (documents sufficient).
Result<std::vector<SearchQuery>> generate_queries(const RefinedIntention& refined,
                                                  const std::vector<Document>& docs,
                                                  const PipelineConfig& cfg,
                                                  TextGenerator& generator,
                                                  const TemplateSet& templates,
                                                  Warnings* warnings = nullptr,
                                                  const CallCtx& ctx = {});

}  // namespace cuem
