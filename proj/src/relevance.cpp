#include "cuem/relevance.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "cuem/json_codec.hpp"
#include "cuem/rng.hpp"
#include "cuem/text.hpp"

namespace cuem {

const char* relevance_label_name(RelevanceLabel l) {
    return l == RelevanceLabel::positive ? "positive" : "negative";
}

Result<RelevanceLabel> relevance_label_from_name(std::string_view name) {
    if (name == "positive") return RelevanceLabel::positive;
    if (name == "negative") return RelevanceLabel::negative;
    return make_error<RelevanceLabel>(Errc::parse_error,
                                      "unknown relevance label: " + std::string(name));
}

Result<RelevanceExample> make_relevance_example(std::string query, std::string document_text,
                                                RelevanceLabel label, double nli_score,
                                                double pos_thr, double neg_thr) {
    if (label == RelevanceLabel::positive && !(nli_score > pos_thr)) {
        return make_error<RelevanceExample>(
            Errc::precondition, "positive example requires nli_score > pos_thr (strict)");
    }
    if (label == RelevanceLabel::negative && !(nli_score < neg_thr)) {
        return make_error<RelevanceExample>(
            Errc::precondition, "negative example requires nli_score < neg_thr (strict)");
    }
    RelevanceExample ex;
    ex.query = std::move(query);
    ex.document_text = std::move(document_text);
    ex.label = label;
    ex.nli_score = nli_score;
    return ex;
}

std::string document_text_of(const Document& doc) {
    return collapse_whitespace(doc.title + " " + doc.body);
}

Result<double> score_relevance(const std::string& query, const Document& doc, PairScorer& scorer,
                               const CallCtx& ctx) {
    if (trim(query).empty()) {
        return make_error<double>(Errc::precondition, "score_relevance needs a non-empty query");
    }
    return scorer.score_pair(query, document_text_of(doc), ctx);
}

Result<std::vector<Document>> select_top_k(const std::string& query,
                                           const std::vector<Document>& docs, int k,
                                           PairScorer& scorer, Warnings* warnings,
                                           const CallCtx& ctx) {
    if (k < 1) {
        return make_error<std::vector<Document>>(Errc::precondition,
                                                 "select_top_k needs k >= 1");
    }
    std::vector<Document> scored = docs;
    for (auto& doc : scored) {
        auto score = score_relevance(query, doc, scorer, ctx);
        if (score.ok()) {
            doc.relevance_score = score.value();
        } else {
            doc.relevance_score = 0.0;
            warn(warnings, "relevance", doc.id + ": " + score.error().message);
        }
    }
    std::sort(scored.begin(), scored.end(), [](const Document& a, const Document& b) {
        if (*a.relevance_score != *b.relevance_score) return *a.relevance_score > *b.relevance_score;
        if (a.retrieval_score != b.retrieval_score) return a.retrieval_score > b.retrieval_score;
        return a.id < b.id;
    });
    if (scored.size() > static_cast<std::size_t>(k)) scored.resize(static_cast<std::size_t>(k));
    return scored;
}

Result<std::vector<RelevanceExample>> build_training_set(
    const std::vector<TrainingPair>& pairs, const std::vector<Document>& candidates,
    PairScorer& nli, double pos_thr, double neg_thr, int neg_ratio, std::uint64_t seed,
    Warnings* warnings, const CallCtx& ctx) {
    if (neg_ratio < 1) {
        return make_error<std::vector<RelevanceExample>>(Errc::precondition,
                                                         "neg_ratio must be >= 1");
    }
    if (!(neg_thr < pos_thr)) {
        return make_error<std::vector<RelevanceExample>>(Errc::precondition,
                                                         "thresholds must satisfy neg < pos");
    }

    std::vector<RelevanceExample> out;
    Rng rng(seed);
    for (const auto& pair : pairs) {
        auto pos_score = nli.score_pair(pair.query, pair.gold_answer, ctx);
        if (!pos_score.ok()) return pos_score.error();
        if (!(pos_score.value() > pos_thr)) continue;  // strict: 0.9 exactly is excluded

        auto positive = make_relevance_example(pair.query, pair.gold_answer,
                                               RelevanceLabel::positive, pos_score.value(),
                                               pos_thr, neg_thr);
        if (!positive.ok()) return positive.error();
        out.push_back(positive.take());

        // Candidates scoring under neg_thr against the gold answer qualify as
        // negatives for this query.
        std::vector<RelevanceExample> eligible;
        for (const auto& doc : candidates) {
            const std::string text = document_text_of(doc);
            auto neg_score = nli.score_pair(text, pair.gold_answer, ctx);
            if (!neg_score.ok()) return neg_score.error();
            if (!(neg_score.value() < neg_thr)) continue;  // strict: 0.3 exactly is excluded
            auto negative = make_relevance_example(pair.query, text, RelevanceLabel::negative,
                                                   neg_score.value(), pos_thr, neg_thr);
            if (!negative.ok()) return negative.error();
            eligible.push_back(negative.take());
        }

        const auto want = static_cast<std::size_t>(neg_ratio);
        if (eligible.size() <= want) {
            if (eligible.size() < want) {
                warn(warnings, "training_set",
                     "query \"" + pair.query + "\": only " + std::to_string(eligible.size()) +
                         " of " + std::to_string(want) + " negatives available");
            }
            for (auto& ex : eligible) out.push_back(std::move(ex));
        } else {
            auto picks = sample_without_replacement(eligible.size(), want, rng);
            std::sort(picks.begin(), picks.end());  // keep candidate order in the output
            for (std::size_t idx : picks) out.push_back(std::move(eligible[idx]));
        }
    }
    return out;
}

namespace {

Json example_to_json(const RelevanceExample& ex) {
    Json j;
    j["document_text"] = ex.document_text;
    j["label"] = relevance_label_name(ex.label);
    j["nli_score"] = ex.nli_score;
    j["query"] = ex.query;
    return j;
}

Result<RelevanceExample> example_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("query") || !j.contains("document_text") ||
        !j.contains("label") || !j.contains("nli_score")) {
        return make_error<RelevanceExample>(Errc::parse_error,
                                            "relevance example needs query, document_text, "
                                            "label, nli_score");
    }
    auto label = relevance_label_from_name(j["label"].get<std::string>());
    if (!label.ok()) return label.error();
    RelevanceExample ex;
    ex.query = j["query"].get<std::string>();
    ex.document_text = j["document_text"].get<std::string>();
    ex.label = label.value();
    ex.nli_score = j["nli_score"].get<double>();
    return ex;
}

}  // namespace

Result<void> export_training_set(const std::vector<RelevanceExample>& examples,
                                 const std::string& path) {
    std::ofstream file(path, std::ios::trunc);
    if (!file) {
        return make_error<void>(Errc::io_error, "cannot open for write: " + path);
    }
    for (const auto& ex : examples) {
        file << example_to_json(ex).dump() << '\n';
    }
    if (!file.good()) {
        return make_error<void>(Errc::io_error, "write failed: " + path);
    }
    return Result<void>();
}

Result<std::vector<RelevanceExample>> import_training_set(const std::string& path) {
    std::ifstream file(path);
    if (!file) {
        return make_error<std::vector<RelevanceExample>>(Errc::io_error,
                                                         "cannot open for read: " + path);
    }
    std::vector<RelevanceExample> out;
    std::string line;
    while (std::getline(file, line)) {
        if (trim(line).empty()) continue;
        auto parsed = parse_json(line);
        if (!parsed.ok()) return parsed.error();
        auto ex = example_from_json(parsed.value());
        if (!ex.ok()) return ex.error();
        out.push_back(ex.take());
    }
    return out;
}

}  // namespace cuem
