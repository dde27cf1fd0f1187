#include "cuem/intent.hpp"

#include <algorithm>

#include "cuem/text.hpp"

namespace cuem {

namespace {

const char* kRefinerFewShots =
    "Example:\n"
    "User question: what plant is on my desk?\n"
    "Intention: The user wants the species of the plant in the photo identified. "
    "You must search desk plant species identification ~";

const char* kQueryGenSystem =
    "You expand a refined search intention into extra search queries when the current "
    "evidence is not enough to answer.";

/// Strips the trailing "~" marker plus surrounding punctuation/quotes from a
/// parsed search query.
std::string clean_query_clause(std::string clause) {
    const std::string strip_tail = "~.!?,;: \t\r\n";
    const std::string strip_head = ",;: \t\r\n";
    std::size_t end = clause.size();
    while (end > 0 && strip_tail.find(clause[end - 1]) != std::string::npos) --end;
    std::size_t begin = 0;
    while (begin < end && strip_head.find(clause[begin]) != std::string::npos) ++begin;
    clause = clause.substr(begin, end - begin);
    if (clause.size() >= 2) {
        const char first = clause.front();
        const char last = clause.back();
        if ((first == '\'' && last == '\'') || (first == '"' && last == '"')) {
            clause = trim(clause.substr(1, clause.size() - 2));
        }
    }
    return clause;
}

}  // namespace

Result<std::vector<std::pair<std::string, std::string>>> summarize_documents(
    const std::vector<Document>& docs, int budget) {
    if (budget < 1) {
        return make_error<std::vector<std::pair<std::string, std::string>>>(
            Errc::precondition, "summarize_documents needs budget >= 1");
    }
    std::vector<std::pair<std::string, std::string>> out;
    if (docs.empty()) return out;
    const std::size_t share = static_cast<std::size_t>(budget) / docs.size();
    out.reserve(docs.size());
    for (const auto& doc : docs) {
        const std::string base =
            doc.summary.has_value() ? *doc.summary : collapse_whitespace(doc.body);
        out.emplace_back(doc.id, truncate_at_word(base, share));
    }
    return out;
}

Result<RefinedIntention> parse_refinement(const std::string& raw, const std::string& sentinel) {
    if (sentinel.empty()) {
        return make_error<RefinedIntention>(Errc::precondition, "sentinel must be non-empty");
    }
    const std::size_t pos = raw.rfind(sentinel);
    if (pos == std::string::npos) {
        return make_error<RefinedIntention>(Errc::missing_sentinel,
                                            "output lacks the directive sentinel");
    }
    const std::string query = clean_query_clause(raw.substr(pos + sentinel.size()));
    if (query.empty()) {
        return make_error<RefinedIntention>(Errc::missing_sentinel,
                                            "directive sentinel carries no search query");
    }
    RefinedIntention refined;
    refined.intent_text = trim(raw);
    refined.search_query = query;
    return refined;
}

RefinedIntention fallback_intention(const MultimodalQuery& query, const std::string& caption,
                                    const PipelineConfig& cfg) {
    std::string seed = trim(query.text);
    bool from_caption = false;
    if (seed.empty()) {
        seed = trim(caption);
        from_caption = !seed.empty();
    }
    if (seed.empty()) seed = "the provided image";
    RefinedIntention refined;
    refined.intent_text = seed + " " + cfg.directive_sentinel;
    refined.search_query = seed;
    refined.used_caption = from_caption;
    return refined;
}

Result<RefinedIntention> refine_intention(
    const MultimodalQuery& query, const std::string& caption,
    const std::vector<std::pair<std::string, std::string>>& summaries, const PipelineConfig& cfg,
    TextGenerator& generator, const TemplateSet& templates, Warnings* warnings,
    const CallCtx& ctx) {
    if (caption.empty() && summaries.empty()) {
        // Nothing to refine against; pass the user request through unchanged.
        return fallback_intention(query, caption, cfg);
    }

    auto prompt = render_template(
        templates.refiner, {{"few shots", kRefinerFewShots},
                            {"previous_chat", render_history(query.history)},
                            {"user_question", query.text.empty() ? "(image only)" : query.text},
                            {"image_caption", caption.empty() ? "(none)" : caption},
                            {"docummnt_summaries", render_summaries(summaries)},
                            {"directive_sentinel", cfg.directive_sentinel}});
    if (!prompt.ok()) return prompt.error();

    auto finish = [&](RefinedIntention refined) {
        refined.used_caption = !caption.empty();
        refined.used_doc_ids.clear();
        refined.used_doc_ids.reserve(summaries.size());
        for (const auto& [id, _] : summaries) refined.used_doc_ids.push_back(id);
        return refined;
    };

    DecodingParams params;
    auto raw = generator.generate(prompt.value(), params, ctx);
    if (!raw.ok()) return raw.error();  // unavailability propagates to the caller
    auto parsed = parse_refinement(raw.value(), cfg.directive_sentinel);
    if (parsed.ok()) return finish(parsed.take());

    const std::string repair = prompt.value() +
                               "\nYour previous reply was invalid. End your reply with '" +
                               cfg.directive_sentinel + " <search query> ~'.";
    auto retry = generator.generate(repair, params, ctx);
    if (!retry.ok()) return retry.error();
    auto reparsed = parse_refinement(retry.value(), cfg.directive_sentinel);
    if (reparsed.ok()) return finish(reparsed.take());

    warn(warnings, "refine", "generator output unparseable twice; using fallback intention");
    return fallback_intention(query, caption, cfg);
}

Result<std::vector<SearchQuery>> generate_queries(const RefinedIntention& refined,
                                                  const std::vector<Document>& docs,
                                                  const PipelineConfig& cfg,
                                                  TextGenerator& generator,
                                                  const TemplateSet& templates, Warnings* warnings,
                                                  const CallCtx& ctx) {
    auto summaries = summarize_documents(docs, cfg.summary_char_budget);
    if (!summaries.ok()) return summaries.error();

    auto prompt = render_template(templates.query_generator,
                                  {{"system_prompt", kQueryGenSystem},
                                   {"previous_chat", "(none)"},
                                   {"refined_information", refined.intent_text},
                                   {"docummnt_summaries", render_summaries(summaries.value())}});
    if (!prompt.ok()) return prompt.error();

    DecodingParams params;
    auto raw = generator.generate(prompt.value(), params, ctx);
    if (!raw.ok()) return raw.error();

    constexpr std::string_view kPrefix = "QUERY:";
    std::vector<SearchQuery> queries;
    for (const auto& line : split_lines(raw.value())) {
        const std::string trimmed = trim(line);
        if (trimmed.rfind(kPrefix, 0) != 0) continue;
        const std::string text = trim(trimmed.substr(kPrefix.size()));
        if (text.empty()) continue;
        SearchQuery q;
        q.text = text;
        q.origin = QueryOrigin::supplementary;
        q.rank = static_cast<int>(queries.size());
        queries.push_back(std::move(q));
    }
    const auto max_queries = static_cast<std::size_t>(cfg.max_supplementary_queries);
    if (queries.size() > max_queries) {
        warn(warnings, "query_generation",
             "generator produced " + std::to_string(queries.size()) + " queries; keeping " +
                 std::to_string(max_queries));
        queries.resize(max_queries);
    }
    return queries;
}

}  // namespace cuem
