#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cuem/backends.hpp"
#include "cuem/result.hpp"
#include "cuem/types.hpp"

namespace cuem {

enum class RelevanceLabel { positive, negative };

const char* relevance_label_name(RelevanceLabel l);
Result<RelevanceLabel> relevance_label_from_name(std::string_view name);

/// One training example for the relevance classifier. Labels partition by
/// entailment score: positive only above pos_thr, negative only below
/// neg_thr; the band between is never materialized.
struct RelevanceExample {
    std::string query;
    std::string document_text;
    RelevanceLabel label = RelevanceLabel::negative;
    double nli_score = 0.0;
};

Result<RelevanceExample> make_relevance_example(std::string query, std::string document_text,
                                                RelevanceLabel label, double nli_score,
                                                double pos_thr = 0.9, double neg_thr = 0.3);

/// A (query, gold answer) pair harvested from logged snippet interactions.
struct TrainingPair {
    std::string query;
    std::string gold_answer;
};

/// The text a document contributes to cross-encoder scoring: title and body.
std::string document_text_of(const Document& doc);

/// Stage 5a scoring primitive: cross-encoder relevance of one document to the
/// query, in [0,1].
Result<double> score_relevance(const std::string& query, const Document& doc, PairScorer& scorer,
                               const CallCtx& ctx = {});

/// Scores every document and keeps the best k, ordered by (relevance desc,
/// retrieval_score desc, id asc). Returned documents carry relevance_score;
/// the input list is untouched. A per-document scoring failure degrades that
/// document to relevance 0 with a warning.
Result<std::vector<Document>> select_top_k(const std::string& query,
                                           const std::vector<Document>& docs, int k,
                                           PairScorer& scorer, Warnings* warnings = nullptr,
                                           const CallCtx& ctx = {});

/// Builds the classifier training set: each (query, gold) pair whose
/// entailment beats pos_thr becomes a positive; negatives are drawn seeded
/// and without replacement from candidates scoring under neg_thr against the
/// same gold answer — exactly neg_ratio per positive when enough qualify,
/// fewer with a warning. Mid-band scores are discarded entirely.
Result<std::vector<RelevanceExample>> build_training_set(
    const std::vector<TrainingPair>& pairs, const std::vector<Document>& candidates,
    PairScorer& nli, double pos_thr = 0.9, double neg_thr = 0.3, int neg_ratio = 4,
    std::uint64_t seed = 0, Warnings* warnings = nullptr, const CallCtx& ctx = {});

/// JSON-lines persistence; export then import round-trips exactly.
Result<void> export_training_set(const std::vector<RelevanceExample>& examples,
                                 const std::string& path);
Result<std::vector<RelevanceExample>> import_training_set(const std::string& path);

}  // namespace cuem
