#pragma once

#include <string>
#include <vector>

#include "cuem/backends.hpp"
#include "cuem/result.hpp"
#include "cuem/types.hpp"

namespace cuem {

/// One line of the user-interaction log: a past search query issued while a
/// given image was on screen.
struct InteractionRecord {
    std::string query;
    std::string image_id;
};

/// Ranks tags from the three origins: interaction-log matches for this image,
/// keywords extracted from similar documents, and titles of similar documents
/// whose similarity clears `annotated_threshold` (those act as curated
/// annotations). Weight = origin priority x source score; output is
/// case-folded, deduplicated (highest-priority origin wins) and sorted by
/// (weight desc, tag asc).
Result<std::vector<ImageTag>> extract_tags(const ImageRef& image,
                                           const std::vector<ScoredDocument>& similar,
                                           const std::vector<InteractionRecord>& interaction_log,
                                           double annotated_threshold);

/// Top-`max_k` body terms by frequency, stopwords removed; ties alphabetical.
Result<std::vector<std::string>> extract_keywords(const Document& doc, int max_k);

/// Issues one text search per top-`tags_to_search` tag — the tag alone is the
/// query, never a concatenation with the user text — then merges the results:
/// deduplicated by id keeping the max score, sorted (score desc, id asc),
/// truncated to k.
Result<std::vector<Document>> tag_text_search(const std::vector<ImageTag>& tags,
                                              const std::string& user_text, int k,
                                              TextSearch& search, const CallCtx& ctx = {},
                                              int tags_to_search = 3);

/// Stage 1: caption + similar-image search + tag ranking + tag text search.
/// Caption and similar-search run concurrently. Any single sub-task failure
/// degrades that field to empty with a warning; the call fails only when the
/// resulting context would carry no information at all.
Result<ImageContext> enrich(const MultimodalQuery& query, const PipelineConfig& cfg,
                            const Backends& backends,
                            const std::vector<InteractionRecord>& interaction_log,
                            Warnings* warnings = nullptr, const CallCtx& ctx = {});

}  // namespace cuem
