#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cuem/backends.hpp"
#include "cuem/json_codec.hpp"
#include "cuem/result.hpp"
#include "cuem/types.hpp"

namespace cuem {

/// One pairwise comparison evaluated under both presentation orders.
/// score_ab is the candidate's score when it is presented first; score_ba is
/// the first-presented (baseline) score in the swapped order. Averaging as
/// (score_ab + (1 - score_ba)) / 2 cancels any purely positional judge bias.
struct JudgedPair {
    std::string case_id;
    double score_ab = 0.0;  // in {0, 0.5, 1}
    double score_ba = 0.0;  // in {0, 0.5, 1}
    double averaged = 0.0;  // in {0, 0.25, 0.5, 0.75, 1}
};

/// Runs the judge twice with swapped presentation order and maps the verdict
/// token (A / B / TIE, for the first-presented response) onto win/tie/loss
/// scores for the candidate. Output that stays unparseable after one retry
/// counts that ordering as a tie, with a warning.
Result<JudgedPair> judge_pairwise(Judge& judge, const std::string& case_id,
                                  const std::string& query, const std::string& candidate,
                                  const std::string& baseline, const std::string& reference,
                                  Warnings* warnings = nullptr, const CallCtx& ctx = {});

/// Arithmetic mean of the averaged pair scores.
Result<double> win_rate(const std::vector<JudgedPair>& pairs);

/// Monte-Carlo standard error: draws `n_resamples` seeded subsamples without
/// replacement of size ceil(subsample_fraction * n), and returns the standard
/// deviation of the subsample means. Constant inputs (and full-size
/// subsamples) give exactly 0.
Result<double> monte_carlo_se(const std::vector<double>& scores, double subsample_fraction,
                              std::uint64_t seed, int n_resamples = 100);

struct RougeScore {
    double precision = 0.0;
    double recall = 0.0;
    double f = 0.0;
};

/// Token-level longest-common-subsequence overlap: precision = LCS/|hyp|,
/// recall = LCS/|ref|, f = harmonic mean. An empty side yields all zeros.
RougeScore rouge_l(const std::string& reference, const std::string& hypothesis);

/// |reference ∩ hypothesis| / |reference| over case-folded entity sets.
Result<double> ner_recall(const std::vector<std::string>& reference_entities,
                          const std::vector<std::string>& hypothesis_entities);

/// Stand-in entity extractor: maximal runs of capitalized words (edge
/// punctuation stripped) become entities, deduplicated in first-appearance
/// order. Real deployments inject a proper NER system; metrics only need the
/// same extractor applied to both sides.
std::vector<std::string> extract_capitalized_entities(const std::string& text);

/// True iff the normalized prediction contains (or equals) any of the
/// pipe-separated gold alternatives. Normalization lowercases, turns
/// punctuation into spaces, collapses whitespace, and folds the "ae"/"e"
/// spelling variance so e.g. "haemorrhages" matches "hemorrhages". Blank
/// alternatives are skipped.
Result<bool> evqa_match(const std::string& prediction, const std::string& gold);

/// One evaluation case: a candidate answer compared against a baseline
/// answer, with a preferred reference response and an optional pipe-separated
/// gold answer for exact-match style scoring.
struct EvalCase {
    std::string case_id;
    std::string query;
    std::string image_id;  // optional
    std::string candidate;
    std::string baseline;
    std::string reference;
    std::string gold;  // optional
};

Json to_json(const EvalCase& v);
Result<EvalCase> eval_case_from_json(const Json& j);
Result<std::vector<EvalCase>> load_eval_cases(const std::string& path);
Result<void> save_eval_cases(const std::vector<EvalCase>& cases, const std::string& path);

struct EvalConfig {
    double subsample_fraction = 0.5;
    std::uint64_t seed = 0;
    int n_resamples = 100;
};

struct EvalReport {
    double win_rate = 0.0;
    double se = 0.0;
    RougeScore rouge_l;     // means over cases, candidate vs reference
    double ner_recall = 0.0;  // mean over cases whose reference has entities
    int n = 0;
};

Json to_json(const RougeScore& v);
Json to_json(const JudgedPair& v);
Json to_json(const EvalReport& v);
Result<EvalReport> eval_report_from_json(const Json& j);

/// Judges every case (concurrently, joined in input order) and aggregates
/// win rate, Monte-Carlo SE over the averaged scores, mean ROUGE-L, and mean
/// NER recall of candidate vs reference.
Result<EvalReport> evaluate_cases(const std::vector<EvalCase>& cases, Judge& judge,
                                  const EvalConfig& cfg = {}, Warnings* warnings = nullptr,
                                  const CallCtx& ctx = {});

}  // namespace cuem
