#include "cuem/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <future>
#include <unordered_map>
#include <unordered_set>

#include "cuem/intent.hpp"
#include "cuem/relevance.hpp"
#include "cuem/text.hpp"

namespace cuem {

namespace {

const char* kAnswerSystem =
    "You answer user questions from retrieved documents, citing every document you rely on.";

const char* kAnswerSafetyPrompt =
    "If the question or the evidence would lead to a harmful answer, refuse briefly instead.";

const char* kNoEvidence = "(no documents retrieved)";

/// Extracts every [doc:<id>] citation in order of first appearance.
std::vector<std::string> parse_citations(const std::string& text) {
    std::vector<std::string> ids;
    std::size_t pos = 0;
    constexpr std::string_view kOpen = "[doc:";
    while ((pos = text.find(kOpen, pos)) != std::string::npos) {
        const std::size_t start = pos + kOpen.size();
        const std::size_t close = text.find(']', start);
        if (close == std::string::npos) break;
        const std::string id = trim(text.substr(start, close - start));
        if (!id.empty() && std::find(ids.begin(), ids.end(), id) == ids.end()) {
            ids.push_back(id);
        }
        pos = close + 1;
    }
    return ids;
}

/// Removes every "[doc:<id>]" marker for one id, tidying the space each
/// removal leaves behind without touching the rest of the formatting.
std::string strip_citation(std::string text, const std::string& id) {
    const std::string marker = "[doc:" + id + "]";
    std::size_t pos;
    while ((pos = text.find(marker)) != std::string::npos) {
        text.erase(pos, marker.size());
        if (pos < text.size() && text[pos] == ' ' && (pos == 0 || text[pos - 1] == ' ')) {
            text.erase(pos, 1);
        }
    }
    return trim(text);
}

}  // namespace

Json to_json(const Answer& v) {
    Json j;
    j["cited_doc_ids"] = v.cited_doc_ids;
    j["model_id"] = v.model_id;
    j["text"] = v.text;
    return j;
}

Json to_json(const PipelineResult& v) {
    Json j;
    j["answer"] = v.answer.has_value() ? to_json(*v.answer) : Json(nullptr);
    j["curated_docs"] = to_json(v.curated_docs);
    j["safety"] = to_json(v.safety);
    j["trace"] = to_json(v.trace);
    return j;
}

Result<Answer> answer_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("text") || !j.contains("cited_doc_ids") ||
        !j.contains("model_id")) {
        return make_error<Answer>(Errc::parse_error,
                                  "answer needs text, cited_doc_ids, model_id");
    }
    Answer a;
    a.text = j["text"].get<std::string>();
    a.cited_doc_ids = j["cited_doc_ids"].get<std::vector<std::string>>();
    a.model_id = j["model_id"].get<std::string>();
    return a;
}

Result<PipelineResult> pipeline_result_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("answer") || !j.contains("safety") ||
        !j.contains("trace") || !j.contains("curated_docs")) {
        return make_error<PipelineResult>(Errc::parse_error,
                                          "pipeline result needs answer, safety, trace, "
                                          "curated_docs");
    }
    PipelineResult r;
    if (!j["answer"].is_null()) {
        auto a = answer_from_json(j["answer"]);
        if (!a.ok()) return a.error();
        r.answer = a.take();
    }
    auto safety = safety_verdict_from_json(j["safety"]);
    if (!safety.ok()) return safety.error();
    r.safety = safety.take();
    auto trace = trace_from_json(j["trace"]);
    if (!trace.ok()) return trace.error();
    r.trace = trace.take();
    for (const auto& dj : j["curated_docs"]) {
        auto d = document_from_json(dj);
        if (!d.ok()) return d.error();
        r.curated_docs.push_back(d.take());
    }
    return r;
}

Result<Answer> generate_answer(const MultimodalQuery& query, const std::vector<Document>& docs,
                               const TemplateSet& templates, TextGenerator& generator,
                               bool no_evidence, Warnings* warnings, const CallCtx& ctx) {
    if (docs.empty() && !no_evidence) {
        return make_error<Answer>(Errc::precondition,
                                  "generate_answer needs documents or no-evidence mode");
    }

    std::vector<std::pair<std::string, std::string>> summaries;
    summaries.reserve(docs.size());
    for (const auto& doc : docs) {
        summaries.emplace_back(doc.id, doc.summary.has_value()
                                           ? *doc.summary
                                           : collapse_whitespace(doc.body));
    }
    auto prompt = render_template(
        templates.answer,
        {{"system_prompt", kAnswerSystem},
         {"safety_prompt", kAnswerSafetyPrompt},
         {"previous_chat", render_history(query.history)},
         {"user_question", query.text.empty() ? "(image only)" : query.text},
         {"docummnt_summaries", docs.empty() ? kNoEvidence : render_summaries(summaries)}});
    if (!prompt.ok()) return prompt.error();

    DecodingParams params;
    auto raw = generator.generate(prompt.value(), params, ctx);
    if (!raw.ok()) return raw.error();

    Answer answer;
    answer.text = trim(raw.value());
    answer.model_id = generator.model_id();

    std::unordered_set<std::string> known;
    for (const auto& doc : docs) known.insert(doc.id);
    for (const auto& id : parse_citations(answer.text)) {
        if (known.count(id) != 0) {
            answer.cited_doc_ids.push_back(id);
        } else {
            warn(warnings, "answer", "stripped citation of unknown document " + id);
            answer.text = strip_citation(answer.text, id);
        }
    }
    return answer;
}

std::vector<Document> merge_documents(const std::vector<std::vector<Document>>& sets) {
    std::unordered_map<std::string, Document> by_id;
    for (const auto& set : sets) {
        for (const auto& doc : set) {
            auto it = by_id.find(doc.id);
            if (it == by_id.end()) {
                by_id.emplace(doc.id, doc);
            } else if (doc.retrieval_score > it->second.retrieval_score) {
                it->second = doc;
            }
        }
    }
    std::vector<Document> out;
    out.reserve(by_id.size());
    for (auto& [_, doc] : by_id) out.push_back(std::move(doc));
    std::sort(out.begin(), out.end(), [](const Document& a, const Document& b) {
        if (a.retrieval_score != b.retrieval_score) return a.retrieval_score > b.retrieval_score;
        return a.id < b.id;
    });
    return out;
}

namespace {

/// Book-keeping for one pipeline run: appends stage records with digests,
/// per-stage backend-call deltas and elapsed time.
class TraceBuilder {
public:
    explicit TraceBuilder(const CallLedger& ledger) : ledger_(ledger) {}

    void begin(std::string stage_name, std::string input_digest) {
        current_.stage_name = std::move(stage_name);
        current_.input_digest = std::move(input_digest);
        calls_before_ = ledger_.total();
        started_ = std::chrono::steady_clock::now();
    }

    void end(PipelineTrace& trace, std::string output_digest) {
        current_.output_digest = std::move(output_digest);
        current_.backend_calls = ledger_.total() - calls_before_;
        current_.elapsed_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                  std::chrono::steady_clock::now() - started_)
                                  .count();
        trace.stages.push_back(current_);
        current_ = StageRecord{};
    }

private:
    const CallLedger& ledger_;
    StageRecord current_;
    std::int64_t calls_before_ = 0;
    std::chrono::steady_clock::time_point started_;
};

}  // namespace

Result<PipelineResult> run_pipeline(const MultimodalQuery& query, const PipelineConfig& cfg,
                                    const PipelineEnv& env, const RunOptions& options) {
    if (auto valid = validate_config(cfg); !valid.ok()) return valid.error();
    if (trim(query.text).empty() && !query.image.has_value()) {
        return make_error<PipelineResult>(Errc::empty_query, "query carries no content");
    }

    CallLedger own_ledger;
    CallLedger& ledger = options.ledger != nullptr ? *options.ledger : own_ledger;
    CallCtx ctx{options.deadline, &ledger};
    PipelineResult result;
    result.trace.trace_id = digest_of(query);
    Warnings& warnings = result.trace.warnings;
    TraceBuilder stage(ledger);

    const std::string query_digest = digest_of(query);

    auto finalize_blocked = [&](SafetyVerdict verdict) {
        result.trace.verdicts.push_back(verdict);
        result.safety = std::move(verdict);
        result.answer.reset();
        return result;
    };
    auto record_allow = [&](const SafetyVerdict& verdict) {
        result.trace.verdicts.push_back(verdict);
    };

    // --- Stage 1: text prefilter --------------------------------------------
    stage.begin("text_prefilter", digest_of_string(query.text));
    auto text_verdict = text_prefilter(query.text, *env.backends.text_safety, &warnings, ctx);
    stage.end(result.trace, digest_of(text_verdict));
    if (text_verdict.decision != SafetyDecision::allow) {
        return finalize_blocked(std::move(text_verdict));
    }
    record_allow(text_verdict);

    // --- Stage 2: image prefilter (multimodal only) -------------------------
    if (query.image.has_value()) {
        stage.begin("image_prefilter", digest_of(*query.image));
        auto image_verdict =
            image_prefilter(*query.image, *env.backends.image_safety, &warnings, ctx);
        stage.end(result.trace, digest_of(image_verdict));
        if (image_verdict.decision != SafetyDecision::allow) {
            return finalize_blocked(std::move(image_verdict));
        }
        record_allow(image_verdict);
    }

    // --- Stage 3: enrichment (multimodal only) ------------------------------
    ImageContext context;
    if (query.image.has_value()) {
        stage.begin("enrichment", query_digest);
        auto enriched = enrich(query, cfg, env.backends, env.interaction_log, &warnings, ctx);
        if (enriched.ok()) {
            context = enriched.take();
        } else {
            warn(&warnings, "enrichment", "degraded to empty context: " + enriched.error().message);
        }
        stage.end(result.trace, digest_of(context));
    }

    std::vector<Document> initial_docs;
    initial_docs.reserve(context.similar_docs.size());
    for (const auto& sd : context.similar_docs) initial_docs.push_back(sd.doc);

    // --- Stage 4: summarize initial evidence --------------------------------
    stage.begin("summarize", digest_of(initial_docs));
    std::vector<std::pair<std::string, std::string>> summaries;
    if (auto summarized = summarize_documents(initial_docs, cfg.summary_char_budget);
        summarized.ok()) {
        summaries = summarized.take();
    } else {
        warn(&warnings, "summarize", summarized.error().message);
    }
    stage.end(result.trace, digest_of_string(render_summaries(summaries)));

    // --- Stage 5: intention refinement ---------------------------------------
    stage.begin("refine", digest_of_string(query.text + "\n" + context.description));
    RefinedIntention refined;
    if (options.enable_refiner) {
        auto refinement = refine_intention(query, context.description, summaries, cfg,
                                           *env.backends.generator, env.templates, &warnings, ctx);
        if (refinement.ok()) {
            refined = refinement.take();
        } else {
            warn(&warnings, "refine",
                 "refiner unavailable, using fallback: " + refinement.error().message);
            refined = fallback_intention(query, context.description, cfg);
        }
    } else {
        refined = fallback_intention(query, context.description, cfg);
    }
    stage.end(result.trace, digest_of(refined));

    // --- Stage 6: instance-wise safety ---------------------------------------
    stage.begin("instance_safety", digest_of_string(query.text));
    auto instance = instance_filter(query, env.instance_db, cfg.instance_similarity_threshold,
                                    *env.backends.embedder, ctx);
    if (!instance.ok()) {
        warn(&warnings, "instance_safety",
             "instance filter failed, blocking: " + instance.error().message);
        auto blocked = make_safety_verdict(SafetyStage::instance, SafetyDecision::block).take();
        stage.end(result.trace, digest_of(blocked));
        return finalize_blocked(std::move(blocked));
    }
    if (instance.value().has_value()) {
        stage.end(result.trace, digest_of(*instance.value()));
        return finalize_blocked(std::move(*instance.value()));
    }
    auto instance_allow = make_safety_verdict(SafetyStage::instance, SafetyDecision::allow).take();
    stage.end(result.trace, digest_of(instance_allow));
    record_allow(instance_allow);

    // --- Stage 7: multimodal detector over the refined intent ---------------
    stage.begin("multimodal_safety", digest_of(refined));
    auto detector = multimodal_detect(refined, query.history, *env.backends.generator,
                                      env.templates, &warnings, ctx);
    stage.end(result.trace, digest_of(detector));
    if (detector.decision != SafetyDecision::allow) {
        return finalize_blocked(std::move(detector));
    }
    record_allow(detector);

    // --- Stage 8: supplementary query generation ----------------------------
    std::vector<SearchQuery> queries;
    {
        SearchQuery primary;
        primary.text = refined.search_query;
        primary.origin = QueryOrigin::refined;
        primary.rank = 0;
        queries.push_back(std::move(primary));
    }
    if (options.enable_query_generator) {
        stage.begin("query_generation", digest_of(refined));
        auto extra = generate_queries(refined, initial_docs, cfg, *env.backends.generator,
                                      env.templates, &warnings, ctx);
        if (extra.ok()) {
            for (auto& q : extra.value()) {
                q.rank = static_cast<int>(queries.size());
                queries.push_back(std::move(q));
            }
        } else {
            warn(&warnings, "query_generation",
                 "degraded to no supplementary queries: " + extra.error().message);
        }
        stage.end(result.trace, digest_of(queries));
    }

    // --- Stage 9: search every query (refined + supplementary) --------------
    stage.begin("supplementary_search", digest_of(queries));
    std::vector<std::vector<Document>> retrieved(queries.size());
    {
        std::vector<std::future<Result<std::vector<Document>>>> futures;
        futures.reserve(queries.size());
        for (const auto& q : queries) {
            futures.push_back(std::async(std::launch::async, [&env, &q, &ctx] {
                return env.backends.search->text_search(q.text, 10, std::nullopt, ctx);
            }));
        }
        for (std::size_t i = 0; i < futures.size(); ++i) {
            auto hits = futures[i].get();
            if (hits.ok()) {
                retrieved[i] = hits.take();
            } else {
                warn(&warnings, "supplementary_search",
                     "query \"" + queries[i].text + "\" failed: " + hits.error().message);
            }
        }
    }
    stage.end(result.trace, digest_of(retrieved));

    // --- Stage 10: API selection ---------------------------------------------
    std::vector<ApiDecision> decisions;
    if (!env.apis.empty()) {
        stage.begin("api_selection", digest_of(refined));
        auto selected = select_apis(env.apis, refined, query, cfg, *env.backends.scorer,
                                    env.templates, &warnings, ctx);
        if (selected.ok()) {
            decisions = selected.take();
        } else {
            warn(&warnings, "api_selection", selected.error().message);
        }
        stage.end(result.trace, digest_of(decisions));
    }

    // --- Stage 11: category-wise safety --------------------------------------
    if (!decisions.empty()) {
        stage.begin("category_safety", digest_of(decisions));
        auto category = category_filter(decisions, env.apis);
        if (category.has_value()) {
            stage.end(result.trace, digest_of(*category));
            return finalize_blocked(std::move(*category));
        }
        auto category_allow =
            make_safety_verdict(SafetyStage::category, SafetyDecision::allow).take();
        stage.end(result.trace, digest_of(category_allow));
        record_allow(category_allow);
    }

    // --- Stage 12: dispatch selected APIs ------------------------------------
    std::vector<std::vector<Document>> api_docs;
    bool any_selected =
        std::any_of(decisions.begin(), decisions.end(), [](const auto& d) { return d.selected; });
    if (any_selected) {
        stage.begin("dispatch", digest_of(decisions));
        for (const auto& decision : decisions) {
            if (!decision.selected) continue;
            auto docs = dispatch(decision, refined, env.connectors, &warnings, ctx);
            if (docs.ok()) {
                api_docs.push_back(docs.take());
            } else {
                warn(&warnings, "dispatch", decision.api_id + ": " + docs.error().message);
            }
        }
        stage.end(result.trace, digest_of(api_docs));
    }

    // --- Stage 13: merge every evidence source -------------------------------
    std::vector<std::vector<Document>> sets;
    sets.push_back(initial_docs);
    for (auto& docs : retrieved) sets.push_back(std::move(docs));
    for (auto& docs : api_docs) sets.push_back(std::move(docs));
    stage.begin("merge", digest_of(sets));
    auto merged = merge_documents(sets);
    stage.end(result.trace, digest_of(merged));

    // --- Stage 14: relevance top-k -------------------------------------------
    stage.begin("relevance", digest_of(merged));
    std::vector<Document> curated;
    if (!merged.empty()) {
        const std::string relevance_query =
            refined.search_query.empty() ? query.text : refined.search_query;
        auto top = select_top_k(relevance_query, merged, cfg.k_top_docs,
                                *env.backends.relevance, &warnings, ctx);
        if (top.ok()) {
            curated = top.take();
        } else {
            warn(&warnings, "relevance", top.error().message);
        }
    }
    stage.end(result.trace, digest_of(curated));
    result.curated_docs = curated;

    // --- Stage 15: answer generation ------------------------------------------
    stage.begin("answer", digest_of(curated));
    auto answer = generate_answer(query, curated, env.templates, *env.backends.generator,
                                  /*no_evidence=*/curated.empty(), &warnings, ctx);
    if (!answer.ok()) {
        stage.end(result.trace, digest_of_string("error"));
        return answer.error();  // the one stage with no fallback
    }
    stage.end(result.trace, digest_of_string(answer.value().text));

    result.answer = answer.take();
    result.safety = result.trace.verdicts.back();  // the last allow verdict recorded
    return result;
}

}  // namespace cuem
