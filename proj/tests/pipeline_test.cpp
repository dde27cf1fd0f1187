#include <algorithm>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cuem/digest.hpp"
#include "cuem/json_codec.hpp"
#include "cuem/mocks.hpp"
#include "cuem/pipeline.hpp"
#include "cuem/rng.hpp"
#include "doctest.h"

using namespace cuem;

namespace {

/// Delegates to an inner generator except on answer prompts, which fail as if
/// only the answering model were down.
class AnswerOutage : public TextGenerator {
public:
    explicit AnswerOutage(std::shared_ptr<TextGenerator> inner) : inner_(std::move(inner)) {}

    Result<std::string> generate(const std::string& prompt, const DecodingParams& params,
                                 const CallCtx& ctx) override {
        if (prompt.find("Answer the user question using only the search results above") !=
            std::string::npos) {
            if (ctx.ledger != nullptr) ctx.ledger->record(BackendKind::text_generator);
            return make_error<std::string>(Errc::backend_unavailable, "answer model down");
        }
        return inner_->generate(prompt, params, ctx);
    }
    std::string model_id() const override { return inner_->model_id(); }

private:
    std::shared_ptr<TextGenerator> inner_;
};

Document doc(std::string id, std::string title, std::string body, double score = 0.0) {
    Document d;
    d.id = std::move(id);
    d.title = std::move(title);
    d.body = std::move(body);
    d.retrieval_score = score;
    return d;
}

ImageRef moth_image() { return image_ref_from_bytes("img-moth", "moth-bytes", "image/jpeg"); }

/// End-to-end environment for a moth-identification scenario. Reachability by
/// construction:
///   web-1        — tag search ("erebia moth"), refined query, raw user text
///   gold-refined — only the refined query ("species identification" terms)
///   gold-supp    — only the supplementary query ("habitat range" terms)
///   sim-1/sim-2  — similar-image neighbors
///   shop-1       — product-finder connector
PipelineEnv moth_env() {
    PipelineEnv env;

    std::vector<ScriptedGenerator::Entry> entries;
    entries.push_back({"refine-moth",
                       {"Rewrite the request above as one clear intention", "dark brown moth"},
                       "The user wants to identify a moth from a photo. "
                       "You must search erebia moth species identification ~"});
    entries.push_back({"qgen-moth",
                       {"You expand a refined search intention into extra search queries",
                        "erebia moth species identification"},
                       "QUERY: erebia moth habitat range"});
    entries.push_back({"detect-safe", {"Is this a safe question to answer?"}, " true}"});
    entries.push_back({"detect-harm",
                       {"Is this a safe question to answer?", "serial killer"},
                       " false}"});
    entries.push_back({"answer-any",
                       {"Answer the user question using only the search results above"},
                       "The erebia moth lives on rocky slopes [doc:web-1]."});
    entries.push_back({"answer-moth",
                       {"Answer the user question using only the search results above",
                        "- [doc:sim-1]"},
                       "This is a Yellow-Spotted Erebia Moth. It lives on rocky alpine slopes "
                       "[doc:sim-1] [doc:web-1]."});
    env.backends.generator = std::make_shared<ScriptedGenerator>(std::move(entries));

    env.backends.describer = std::make_shared<MockDescriber>(std::map<std::string, std::string>{
        {moth_image().content_digest, "a dark brown moth resting on a leaf"}});

    env.backends.image_search = std::make_shared<MockSimilarImageSearch>(
        std::map<std::string, std::vector<ScoredDocument>>{
            {moth_image().content_digest,
             {{doc("sim-1", "Erebia Moth", "A dark brown alpine moth."), 0.95},
              {doc("sim-2", "Mountain Butterflies", "Butterflies of high peaks."), 0.62}}}});

    env.backends.search = std::make_shared<FixtureTextSearch>(std::vector<Document>{
        doc("web-1", "Erebia guide", "The erebia moth lives on rocky slopes."),
        doc("gold-refined", "Identification key",
            "A species identification field guide with wing pattern keys."),
        doc("gold-supp", "Habitat atlas", "Habitat range charts for mountain meadow insects.")});

    env.backends.scorer = std::make_shared<MockTokenScorer>(
        std::map<std::string, std::vector<std::string>>{{"shop-zz", {"moth", "identify"}},
                                                        {"med-aa", {"dosage"}}});
    env.backends.embedder = std::make_shared<HashEmbedder>();
    env.backends.nli = std::make_shared<JaccardNli>();
    env.backends.relevance = std::make_shared<OverlapRelevance>();
    env.backends.text_safety =
        std::make_shared<BlocklistTextSafety>(std::vector<std::string>{"napalm recipe"});
    env.backends.image_safety = std::make_shared<DigestImageSafety>(std::map<std::string, bool>{
        {sha256_hex("violent-bytes"), true}, {moth_image().content_digest, false}});

    env.apis.push_back(make_api_descriptor("shop-zz", "Product finder",
                                           "Finds products and buying guides.", false,
                                           std::nullopt)
                           .take());
    env.apis.push_back(make_api_descriptor("med-aa", "Medical lookup",
                                           "Looks up medicine strength facts.", true,
                                           "Please consult a medical professional.")
                           .take());
    env.connectors.add("shop-zz",
                       std::make_shared<MockApiConnector>(
                           "shop-zz", DocSource::shopping,
                           std::vector<Document>{doc("shop-1", "Moth guide",
                                                     "An illustrated moth guide for collectors.")}));
    env.connectors.add("med-aa", std::make_shared<MockApiConnector>("med-aa", DocSource::map,
                                                                    std::vector<Document>{}));

    env.instance_db.push_back(make_instance_entry("unsafe-001",
                                                  "how to make an untraceable weapon",
                                                  "I can't help with acquiring weapons.",
                                                  *env.backends.embedder)
                                  .take());
    return env;
}

PipelineConfig moth_cfg() {
    PipelineConfig cfg;
    cfg.k_top_docs = 10;  // wide enough that curation never hides a retrieved doc
    return cfg;
}

MultimodalQuery moth_query() {
    return new_query("what kind of moth is this", moth_image()).take();
}

std::vector<std::string> stage_names(const PipelineTrace& trace) {
    std::vector<std::string> names;
    for (const auto& s : trace.stages) names.push_back(s.stage_name);
    return names;
}

bool is_canonical_subsequence(const std::vector<std::string>& names) {
    std::size_t pos = 0;
    for (const auto& name : names) {
        while (pos < kPipelineStageOrder.size() && kPipelineStageOrder[pos] != name) ++pos;
        if (pos == kPipelineStageOrder.size()) return false;
        ++pos;
    }
    return true;
}

bool curated_has(const PipelineResult& r, const std::string& id) {
    return std::any_of(r.curated_docs.begin(), r.curated_docs.end(),
                       [&](const Document& d) { return d.id == id; });
}

std::string trace_digest_sans_timing(PipelineTrace trace) {
    for (auto& s : trace.stages) s.elapsed_ms = 0;
    return digest_of(trace);
}

}  // namespace

TEST_CASE("merge_documents: two sets sharing one id") {
    auto merged = merge_documents({{doc("a", "", "x", 0.5), doc("b", "", "x", 0.4)},
                                   {doc("b", "", "x", 0.7), doc("c", "", "x", 0.1)}});
    REQUIRE(merged.size() == 3);
    CHECK(merged[0].id == "b");
    CHECK(merged[0].retrieval_score == doctest::Approx(0.7));
    CHECK(merged[1].id == "a");
    CHECK(merged[2].id == "c");
}

TEST_CASE("merge_documents: empty inputs") {
    CHECK(merge_documents({}).empty());
    CHECK(merge_documents({{}, {}}).empty());
}

TEST_CASE("merge_documents: brute-force dedup oracle") {
    Rng rng(2024);
    const std::vector<std::string> pool{"a", "b", "c", "d", "e", "f"};
    for (int round = 0; round < 50; ++round) {
        std::vector<std::vector<Document>> sets(1 + rng.next_below(3));
        for (auto& set : sets) {
            const std::size_t n = rng.next_below(5);
            for (std::size_t i = 0; i < n; ++i) {
                set.push_back(doc(pool[rng.next_below(pool.size())], "t", "b",
                                  static_cast<double>(rng.next_below(100)) / 100.0));
            }
        }
        std::map<std::string, double> best;
        for (const auto& set : sets) {
            for (const auto& d : set) {
                auto [it, fresh] = best.emplace(d.id, d.retrieval_score);
                if (!fresh) it->second = std::max(it->second, d.retrieval_score);
            }
        }
        std::vector<std::pair<std::string, double>> expected(best.begin(), best.end());
        std::sort(expected.begin(), expected.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        auto merged = merge_documents(sets);
        REQUIRE(merged.size() == expected.size());
        for (std::size_t i = 0; i < merged.size(); ++i) {
            CHECK(merged[i].id == expected[i].first);
            CHECK(merged[i].retrieval_score == doctest::Approx(expected[i].second));
        }
    }
}

TEST_CASE("generate_answer: known citations kept, unknown stripped with warning") {
    ScriptedGenerator gen({{"only",
                            {"Answer the user question"},
                            "Alpha fact [doc:a] and ghost [doc:zz] end."}});
    Warnings warnings;
    auto query = new_query("q", std::nullopt).take();
    auto answer = generate_answer(query, {doc("a", "t", "b"), doc("b", "t", "b")},
                                  TemplateSet::builtin(), gen, false, &warnings);
    REQUIRE(answer.ok());
    CHECK(answer.value().text == "Alpha fact [doc:a] and ghost end.");
    CHECK(answer.value().cited_doc_ids == std::vector<std::string>{"a"});
    CHECK(answer.value().model_id == "scripted-v1");
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("zz") != std::string::npos);
}

TEST_CASE("generate_answer: citations dedup to first-appearance order") {
    ScriptedGenerator gen({{"only",
                            {"Answer the user question"},
                            "See [doc:b] then [doc:a] then [doc:b] again."}});
    auto query = new_query("q", std::nullopt).take();
    auto answer =
        generate_answer(query, {doc("a", "t", "x"), doc("b", "t", "x")}, TemplateSet::builtin(), gen);
    REQUIRE(answer.ok());
    CHECK(answer.value().cited_doc_ids == std::vector<std::string>{"b", "a"});
}

TEST_CASE("generate_answer: no-evidence mode yields an uncited answer") {
    ScriptedGenerator gen(
        {{"only", {"(no documents retrieved)"}, "I could not find anything relevant."}});
    auto query = new_query("q", std::nullopt).take();
    auto answer = generate_answer(query, {}, TemplateSet::builtin(), gen, /*no_evidence=*/true);
    REQUIRE(answer.ok());
    CHECK(answer.value().text == "I could not find anything relevant.");
    CHECK(answer.value().cited_doc_ids.empty());
}

TEST_CASE("generate_answer: empty docs without the flag is a precondition error") {
    ScriptedGenerator gen({});
    auto query = new_query("q", std::nullopt).take();
    auto answer = generate_answer(query, {}, TemplateSet::builtin(), gen);
    REQUIRE(!answer.ok());
    CHECK(answer.error().code == Errc::precondition);
}

TEST_CASE("generate_answer: unavailable generator surfaces the error") {
    ScriptedGenerator gen({}, "UNKNOWN", "scripted-v1", /*unavailable=*/true);
    auto query = new_query("q", std::nullopt).take();
    auto answer = generate_answer(query, {doc("a", "t", "b")}, TemplateSet::builtin(), gen);
    REQUIRE(!answer.ok());
    CHECK(answer.error().code == Errc::backend_unavailable);
}

TEST_CASE("run_pipeline: happy path hits every canonical stage and answers") {
    auto env = moth_env();
    CallLedger ledger;
    RunOptions options;
    options.ledger = &ledger;
    auto result = run_pipeline(moth_query(), moth_cfg(), env, options);
    REQUIRE(result.ok());
    const auto& r = result.value();

    REQUIRE(r.answer.has_value());
    CHECK(r.safety.decision == SafetyDecision::allow);
    CHECK(r.answer->text.find("Yellow-Spotted Erebia Moth") != std::string::npos);
    CHECK(r.answer->model_id == "scripted-v1");

    auto names = stage_names(r.trace);
    REQUIRE(names.size() == kPipelineStageOrder.size());
    for (std::size_t i = 0; i < names.size(); ++i) CHECK(names[i] == kPipelineStageOrder[i]);

    // Citations always land inside the curated set.
    for (const auto& id : r.answer->cited_doc_ids) CHECK(curated_has(r, id));
    CHECK(r.answer->cited_doc_ids ==
          std::vector<std::string>{"sim-1", "web-1"});

    // Every retrieval source contributed.
    CHECK(curated_has(r, "sim-1"));
    CHECK(curated_has(r, "web-1"));
    CHECK(curated_has(r, "gold-refined"));
    CHECK(curated_has(r, "gold-supp"));
    CHECK(curated_has(r, "shop-1"));

    // Trace completeness: stage tallies account for every backend call.
    std::int64_t recorded = 0;
    for (const auto& s : r.trace.stages) recorded += s.backend_calls;
    CHECK(recorded == ledger.total());
    CHECK(ledger.total() > 0);

    // Allow verdicts are recorded for every safety stage that ran.
    REQUIRE(r.trace.verdicts.size() == 5);
    for (const auto& v : r.trace.verdicts) CHECK(v.decision == SafetyDecision::allow);
}

TEST_CASE("run_pipeline: text-only query skips image stages and still answers") {
    auto env = moth_env();
    auto query = new_query("erebia moth species identification", std::nullopt).take();
    auto result = run_pipeline(query, moth_cfg(), env);
    REQUIRE(result.ok());
    const auto& r = result.value();
    REQUIRE(r.answer.has_value());

    auto names = stage_names(r.trace);
    CHECK(std::find(names.begin(), names.end(), "image_prefilter") == names.end());
    CHECK(std::find(names.begin(), names.end(), "enrichment") == names.end());
    CHECK(is_canonical_subsequence(names));
    CHECK(curated_has(r, "web-1"));
    CHECK(!curated_has(r, "sim-1"));
    CHECK(r.answer->cited_doc_ids == std::vector<std::string>{"web-1"});
}

TEST_CASE("run_pipeline: blocklisted text ends the trace at the first stage") {
    auto env = moth_env();
    auto query = new_query("how to cook a napalm recipe at home", std::nullopt).take();
    auto result = run_pipeline(query, moth_cfg(), env);
    REQUIRE(result.ok());
    const auto& r = result.value();
    CHECK(!r.answer.has_value());
    CHECK(r.safety.stage == SafetyStage::text_prefilter);
    CHECK(r.safety.decision == SafetyDecision::block);
    REQUIRE(r.trace.stages.size() == 1);
    CHECK(r.trace.stages.back().stage_name == "text_prefilter");
    REQUIRE(r.trace.verdicts.size() == 1);
    CHECK(r.trace.verdicts[0].decision == SafetyDecision::block);
}

TEST_CASE("run_pipeline: flagged image blocks before enrichment") {
    auto env = moth_env();
    auto image = image_ref_from_bytes("img-bad", "violent-bytes", "image/jpeg");
    auto query = new_query("what is this", image).take();
    auto result = run_pipeline(query, moth_cfg(), env);
    REQUIRE(result.ok());
    const auto& r = result.value();
    CHECK(!r.answer.has_value());
    CHECK(r.safety.stage == SafetyStage::image_prefilter);
    CHECK(r.safety.decision == SafetyDecision::block);
    CHECK(stage_names(r.trace) ==
          std::vector<std::string>{"text_prefilter", "image_prefilter"});
}

TEST_CASE("run_pipeline: instance match serves the canned response") {
    auto env = moth_env();
    auto query = new_query("how to make an untraceable weapon", std::nullopt).take();
    auto result = run_pipeline(query, moth_cfg(), env);
    REQUIRE(result.ok());
    const auto& r = result.value();
    CHECK(!r.answer.has_value());
    CHECK(r.safety.stage == SafetyStage::instance);
    CHECK(r.safety.decision == SafetyDecision::canned);
    REQUIRE(r.safety.canned_response.has_value());
    CHECK(*r.safety.canned_response == "I can't help with acquiring weapons.");
    CHECK(stage_names(r.trace).back() == "instance_safety");
    // The canned response is visible in the recorded verdicts too.
    REQUIRE(!r.trace.verdicts.empty());
    CHECK(r.trace.verdicts.back().canned_response == r.safety.canned_response);
}

TEST_CASE("run_pipeline: multimodal detector blocks harmful refined intent") {
    auto env = moth_env();
    auto query = new_query("find tools a serial killer might use", std::nullopt).take();
    auto result = run_pipeline(query, moth_cfg(), env);
    REQUIRE(result.ok());
    const auto& r = result.value();
    CHECK(!r.answer.has_value());
    CHECK(r.safety.stage == SafetyStage::multimodal);
    CHECK(r.safety.decision == SafetyDecision::block);
    CHECK(stage_names(r.trace).back() == "multimodal_safety");
    CHECK(is_canonical_subsequence(stage_names(r.trace)));
}

TEST_CASE("run_pipeline: safety-relevant API selection serves its category response") {
    auto env = moth_env();
    auto query = new_query("correct dosage for pain medication", std::nullopt).take();
    auto result = run_pipeline(query, moth_cfg(), env);
    REQUIRE(result.ok());
    const auto& r = result.value();
    CHECK(!r.answer.has_value());
    CHECK(r.safety.stage == SafetyStage::category);
    CHECK(r.safety.decision == SafetyDecision::canned);
    REQUIRE(r.safety.canned_response.has_value());
    CHECK(*r.safety.canned_response == "Please consult a medical professional.");
    CHECK(stage_names(r.trace).back() == "category_safety");
}

TEST_CASE("run_pipeline: ablation drops exactly the evidence its component found") {
    auto env = moth_env();
    auto cfg = moth_cfg();

    auto full = run_pipeline(moth_query(), cfg, env);
    REQUIRE(full.ok());
    REQUIRE(curated_has(full.value(), "gold-supp"));
    REQUIRE(curated_has(full.value(), "gold-refined"));

    RunOptions no_qgen;
    no_qgen.enable_query_generator = false;
    auto without_qgen = run_pipeline(moth_query(), cfg, env, no_qgen);
    REQUIRE(without_qgen.ok());
    CHECK(!curated_has(without_qgen.value(), "gold-supp"));
    CHECK(curated_has(without_qgen.value(), "gold-refined"));  // refiner still on
    auto names = stage_names(without_qgen.value().trace);
    CHECK(std::find(names.begin(), names.end(), "query_generation") == names.end());

    RunOptions no_refiner;
    no_refiner.enable_refiner = false;
    auto without_refiner = run_pipeline(moth_query(), cfg, env, no_refiner);
    REQUIRE(without_refiner.ok());
    CHECK(!curated_has(without_refiner.value(), "gold-refined"));
    CHECK(curated_has(without_refiner.value(), "web-1"));  // raw text still retrieves
}

TEST_CASE("run_pipeline: invalid query is the one rejected input") {
    auto env = moth_env();
    MultimodalQuery blank;  // bypasses new_query validation on purpose
    blank.text = "   ";
    auto result = run_pipeline(blank, moth_cfg(), env);
    REQUIRE(!result.ok());
    CHECK(result.error().code == Errc::empty_query);
}

TEST_CASE("run_pipeline: a fully-down generator blocks at the detector, not later") {
    auto env = moth_env();
    env.backends.generator =
        std::make_shared<ScriptedGenerator>(std::vector<ScriptedGenerator::Entry>{}, "UNKNOWN",
                                            "scripted-v1", /*unavailable=*/true);
    auto query = new_query("erebia moth species identification", std::nullopt).take();
    auto result = run_pipeline(query, moth_cfg(), env);
    REQUIRE(result.ok());  // the detector fails closed before the answer stage
    CHECK(result.value().safety.decision == SafetyDecision::block);
    CHECK(result.value().safety.stage == SafetyStage::multimodal);
}

TEST_CASE("run_pipeline: answer-stage outage is the one surfaced internal error") {
    auto env = moth_env();
    env.backends.generator = std::make_shared<AnswerOutage>(env.backends.generator);
    auto result = run_pipeline(moth_query(), moth_cfg(), env);
    REQUIRE(!result.ok());
    CHECK(result.error().code == Errc::backend_unavailable);
}

TEST_CASE("run_pipeline: repeated runs are byte-identical except timing") {
    auto env = moth_env();
    auto first = run_pipeline(moth_query(), moth_cfg(), env);
    REQUIRE(first.ok());
    const auto first_trace = trace_digest_sans_timing(first.value().trace);
    const auto first_answer = digest_of(*first.value().answer);
    const auto first_docs = digest_of(first.value().curated_docs);
    for (int i = 0; i < 4; ++i) {
        auto again = run_pipeline(moth_query(), moth_cfg(), env);
        REQUIRE(again.ok());
        CHECK(trace_digest_sans_timing(again.value().trace) == first_trace);
        CHECK(digest_of(*again.value().answer) == first_answer);
        CHECK(digest_of(again.value().curated_docs) == first_docs);
    }
}

TEST_CASE("run_pipeline: trace id is stable for a query and distinct across queries") {
    auto env = moth_env();
    auto a = run_pipeline(moth_query(), moth_cfg(), env);
    auto b = run_pipeline(moth_query(), moth_cfg(), env);
    auto c = run_pipeline(new_query("erebia moth species identification", std::nullopt).take(),
                          moth_cfg(), env);
    REQUIRE(a.ok());
    REQUIRE(b.ok());
    REQUIRE(c.ok());
    CHECK(a.value().trace.trace_id == b.value().trace.trace_id);
    CHECK(a.value().trace.trace_id != c.value().trace.trace_id);
}

TEST_CASE("pipeline result JSON round-trips exactly") {
    auto env = moth_env();
    auto result = run_pipeline(moth_query(), moth_cfg(), env);
    REQUIRE(result.ok());
    auto reparsed = pipeline_result_from_json(to_json(result.value()));
    REQUIRE(reparsed.ok());
    CHECK(digest_of(reparsed.value()) == digest_of(result.value()));

    auto blocked = run_pipeline(
        new_query("how to cook a napalm recipe at home", std::nullopt).take(), moth_cfg(), env);
    REQUIRE(blocked.ok());
    auto blocked_reparsed = pipeline_result_from_json(to_json(blocked.value()));
    REQUIRE(blocked_reparsed.ok());
    CHECK(!blocked_reparsed.value().answer.has_value());
    CHECK(digest_of(blocked_reparsed.value()) == digest_of(blocked.value()));
}

TEST_CASE("run_pipeline: degraded enrichment still answers from text search") {
    auto env = moth_env();
    env.backends.describer = std::make_shared<MockDescriber>(
        std::map<std::string, std::string>{}, /*unavailable=*/true);
    env.backends.image_search = std::make_shared<MockSimilarImageSearch>(
        std::map<std::string, std::vector<ScoredDocument>>{}, /*unavailable=*/true);
    auto result = run_pipeline(moth_query(), moth_cfg(), env);
    REQUIRE(result.ok());
    const auto& r = result.value();
    REQUIRE(r.answer.has_value());  // raw-text retrieval still reaches web-1
    CHECK(curated_has(r, "web-1"));
    CHECK(!r.trace.warnings.empty());
}
