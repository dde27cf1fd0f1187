#include "cuem/intent.hpp"

#include <cctype>
#include <memory>
#include <string>
#include <vector>

#include "cuem/mocks.hpp"
#include "cuem/text.hpp"
#include "doctest.h"

using namespace cuem;

namespace {

Document doc(std::string id, std::string body, std::optional<std::string> summary = std::nullopt) {
    Document d;
    d.id = std::move(id);
    d.title = "title of " + d.id;
    d.body = std::move(body);
    d.summary = std::move(summary);
    return d;
}

/// Oracle for the last-occurrence rule: scan from the end for the sentinel.
std::size_t rfind_oracle(const std::string& raw, const std::string& sentinel) {
    for (std::size_t i = raw.size(); i-- > 0;) {
        if (raw.compare(i, sentinel.size(), sentinel) == 0) return i;
    }
    return std::string::npos;
}

}  // namespace

TEST_CASE("summarize_documents: two docs share a 200-char budget") {
    const std::string long_body(400, 'x');
    std::vector<Document> docs{doc("a", long_body), doc("b", long_body)};
    auto summaries = summarize_documents(docs, 200);
    REQUIRE(summaries.ok());
    REQUIRE(summaries.value().size() == 2);
    std::size_t total = 0;
    for (const auto& [id, text] : summaries.value()) {
        CHECK(text.size() <= 100);
        total += text.size();
    }
    CHECK(total <= 200);
}

TEST_CASE("summarize_documents: stored summary passes through when within share") {
    std::vector<Document> docs{doc("a", "ignored body text", std::string("curated summary"))};
    auto summaries = summarize_documents(docs, 200);
    REQUIRE(summaries.ok());
    CHECK(summaries.value()[0].second == "curated summary");
}

TEST_CASE("summarize_documents: oversize stored summary is truncated at a word boundary") {
    std::string long_summary;
    for (int i = 0; i < 40; ++i) long_summary += "word" + std::to_string(i) + " ";
    std::vector<Document> docs{doc("a", "body", long_summary)};
    auto summaries = summarize_documents(docs, 50);
    REQUIRE(summaries.ok());
    const std::string& text = summaries.value()[0].second;
    CHECK(text.size() <= 50);
    CHECK_FALSE(text.empty());
    // No word is cut mid-way: the output plus a space is a prefix-aligned cut.
    CHECK(long_summary.rfind(text + " ", 0) == 0);
}

TEST_CASE("summarize_documents: empty docs give empty list; bad budget rejected") {
    auto empty = summarize_documents({}, 100);
    REQUIRE(empty.ok());
    CHECK(empty.value().empty());
    CHECK(summarize_documents({}, 0).error().code == Errc::precondition);
}

TEST_CASE("parse_refinement: clause after the sentinel becomes the query") {
    auto refined = parse_refinement("The user wants X. You must search X reviews ~",
                                    "You must search");
    REQUIRE(refined.ok());
    CHECK(refined.value().search_query == "X reviews");
    CHECK(refined.value().intent_text == "The user wants X. You must search X reviews ~");
}

TEST_CASE("parse_refinement: missing sentinel fails") {
    auto refined = parse_refinement("The user wants X.", "You must search");
    CHECK(refined.error().code == Errc::missing_sentinel);
}

TEST_CASE("parse_refinement: sentinel with empty clause fails") {
    auto refined = parse_refinement("Intent. You must search ~", "You must search");
    CHECK(refined.error().code == Errc::missing_sentinel);
}

TEST_CASE("parse_refinement: last occurrence wins, checked against end-scan oracle") {
    const std::string sentinel = "You must search";
    const std::string raw =
        "First thought: You must search wrong thing ~ but reconsidering the image, "
        "You must search right thing ~";
    auto refined = parse_refinement(raw, sentinel);
    REQUIRE(refined.ok());
    CHECK(refined.value().search_query == "right thing");

    const std::size_t pos = rfind_oracle(raw, sentinel);
    REQUIRE(pos != std::string::npos);
    std::string tail = raw.substr(pos + sentinel.size());
    while (!tail.empty() &&
           (tail.back() == '~' || tail.back() == ' ' || ispunct(static_cast<unsigned char>(tail.back())))) {
        tail.pop_back();
    }
    CHECK(refined.value().search_query == trim(tail));
}

TEST_CASE("parse_refinement: punctuation and quotes stripped from the clause") {
    auto refined = parse_refinement("Intent. You must search 'cafe reviews'. ~",
                                    "You must search");
    REQUIRE(refined.ok());
    CHECK(refined.value().search_query == "cafe reviews");
}

TEST_CASE("fallback_intention: user text seeds intent and query") {
    auto query = new_query("find a cafe like this in Yongin",
                           image_ref_from_bytes("img", "bytes", "image/png"));
    REQUIRE(query.ok());
    PipelineConfig cfg;
    auto refined = fallback_intention(query.value(), "a cozy cafe interior", cfg);
    CHECK(refined.search_query == "find a cafe like this in Yongin");
    CHECK(refined.intent_text.find(cfg.directive_sentinel) != std::string::npos);
    CHECK_FALSE(refined.used_caption);
}

TEST_CASE("fallback_intention: caption seeds when text empty; constant seed as last resort") {
    auto query = new_query("", image_ref_from_bytes("img", "bytes", "image/png"));
    REQUIRE(query.ok());
    PipelineConfig cfg;
    auto refined = fallback_intention(query.value(), "a cozy cafe interior", cfg);
    CHECK(refined.search_query == "a cozy cafe interior");
    CHECK(refined.used_caption);

    auto bare = fallback_intention(query.value(), "", cfg);
    CHECK_FALSE(bare.search_query.empty());
    CHECK(bare.intent_text.find(cfg.directive_sentinel) != std::string::npos);
}

TEST_CASE("refine_intention: cafe fixture produces the scripted refined query") {
    ScriptedGenerator generator(
        {{"cafe",
          {"find a cafe like this in Yongin", "cozy cafe"},
          "The user wants a cafe with this atmosphere near Yongin. "
          "You must search quiet atmosphere cafe Yongin ~"}});
    auto query = new_query("find a cafe like this in Yongin",
                           image_ref_from_bytes("img", "bytes", "image/png"));
    REQUIRE(query.ok());
    PipelineConfig cfg;
    Warnings warnings;
    auto refined = refine_intention(query.value(), "cozy cafe interior with plants", {}, cfg,
                                    generator, TemplateSet::builtin(), &warnings);
    REQUIRE(refined.ok());
    CHECK(refined.value().search_query == "quiet atmosphere cafe Yongin");
    CHECK(refined.value().intent_text.find(cfg.directive_sentinel) != std::string::npos);
    CHECK(refined.value().used_caption);
    CHECK(warnings.empty());
}

TEST_CASE("refine_intention: cabin fixture mentions the visual context") {
    ScriptedGenerator generator(
        {{"cabin",
          {"Find me a place like this in Gangwon-do", "wooden cabin"},
          "The user wants to find a similar accommodation in Gangwon-do: a wooden cabin in a "
          "forest. You must search wooden forest cabin accommodation Gangwon-do ~"}});
    auto query = new_query("Find me a place like this in Gangwon-do",
                           image_ref_from_bytes("img", "cabin-bytes", "image/png"));
    REQUIRE(query.ok());
    auto refined = refine_intention(query.value(), "a wooden cabin among tall forest trees", {},
                                    PipelineConfig{}, generator, TemplateSet::builtin());
    REQUIRE(refined.ok());
    CHECK(refined.value().intent_text.find("cabin") != std::string::npos);
    CHECK(refined.value().search_query.find("cabin") != std::string::npos);
}

TEST_CASE("refine_intention: summaries flow into used_doc_ids") {
    ScriptedGenerator generator(
        {{"any", {"User question"}, "Intent. You must search something useful ~"}});
    auto query = new_query("question", image_ref_from_bytes("img", "b", "image/png"));
    REQUIRE(query.ok());
    std::vector<std::pair<std::string, std::string>> summaries{{"doc-1", "s1"}, {"doc-2", "s2"}};
    auto refined = refine_intention(query.value(), "caption", summaries, PipelineConfig{},
                                    generator, TemplateSet::builtin());
    REQUIRE(refined.ok());
    CHECK(refined.value().used_doc_ids == std::vector<std::string>{"doc-1", "doc-2"});
}

TEST_CASE("refine_intention: no caption and no summaries passes through without a call") {
    CallLedger ledger;
    CallCtx ctx{Deadline::none(), &ledger};
    ScriptedGenerator generator({});
    auto query = new_query("plain question", image_ref_from_bytes("img", "b", "image/png"));
    REQUIRE(query.ok());
    auto refined = refine_intention(query.value(), "", {}, PipelineConfig{}, generator,
                                    TemplateSet::builtin(), nullptr, ctx);
    REQUIRE(refined.ok());
    CHECK(refined.value().search_query == "plain question");
    CHECK(ledger.count(BackendKind::text_generator) == 0);
}

TEST_CASE("refine_intention: unparseable output twice falls back with warning") {
    CallLedger ledger;
    CallCtx ctx{Deadline::none(), &ledger};
    ScriptedGenerator generator({}, "no sentinel here at all");
    auto query = new_query("broken case", image_ref_from_bytes("img", "b", "image/png"));
    REQUIRE(query.ok());
    PipelineConfig cfg;
    Warnings warnings;
    auto refined = refine_intention(query.value(), "some caption", {}, cfg, generator,
                                    TemplateSet::builtin(), &warnings, ctx);
    REQUIRE(refined.ok());
    CHECK(refined.value().search_query == "broken case");
    CHECK(refined.value().intent_text.find(cfg.directive_sentinel) != std::string::npos);
    CHECK(ledger.count(BackendKind::text_generator) == 2);  // initial + one repair retry
    REQUIRE_FALSE(warnings.empty());
    CHECK(warnings[0].rfind("refine:", 0) == 0);
}

TEST_CASE("refine_intention: parse failure then repaired retry succeeds without warning") {
    // The repair prompt contains the extra instruction text; only then does
    // the scripted entry with the valid output fire.
    ScriptedGenerator generator({{"repaired",
                                  {"Your previous reply was invalid"},
                                  "Intent. You must search repaired query ~"}},
                                "garbage without the marker");
    auto query = new_query("question", image_ref_from_bytes("img", "b", "image/png"));
    REQUIRE(query.ok());
    Warnings warnings;
    auto refined = refine_intention(query.value(), "caption", {}, PipelineConfig{}, generator,
                                    TemplateSet::builtin(), &warnings);
    REQUIRE(refined.ok());
    CHECK(refined.value().search_query == "repaired query");
    CHECK(warnings.empty());
}

TEST_CASE("refine_intention: generator unavailability propagates") {
    ScriptedGenerator generator({}, "UNKNOWN", "scripted-v1", /*unavailable=*/true);
    auto query = new_query("question", image_ref_from_bytes("img", "b", "image/png"));
    REQUIRE(query.ok());
    auto refined = refine_intention(query.value(), "caption", {}, PipelineConfig{}, generator,
                                    TemplateSet::builtin());
    CHECK(refined.error().code == Errc::backend_unavailable);
}

TEST_CASE("refine_intention: sentinel invariant holds on every path") {
    PipelineConfig cfg;
    auto query = new_query("check invariant", image_ref_from_bytes("img", "b", "image/png"));
    REQUIRE(query.ok());

    ScriptedGenerator good({{"g", {"check invariant"}, "I. You must search good path ~"}});
    ScriptedGenerator bad({}, "never valid");
    for (TextGenerator* generator : {static_cast<TextGenerator*>(&good),
                                     static_cast<TextGenerator*>(&bad)}) {
        auto refined = refine_intention(query.value(), "caption", {}, cfg, *generator,
                                        TemplateSet::builtin());
        REQUIRE(refined.ok());
        CHECK(refined.value().intent_text.find(cfg.directive_sentinel) != std::string::npos);
        CHECK_FALSE(refined.value().search_query.empty());
    }
}

TEST_CASE("generate_queries: white-pants fixture yields the two supplementary queries") {
    ScriptedGenerator generator({{"pants",
                                  {"white wide-fit pants"},
                                  "QUERY: white cargo pants\nQUERY: white harness pants"}});
    RefinedIntention refined;
    refined.intent_text = "The user wants white wide-fit pants. You must search white pants ~";
    refined.search_query = "white pants";
    auto queries = generate_queries(refined, {}, PipelineConfig{}, generator,
                                    TemplateSet::builtin());
    REQUIRE(queries.ok());
    REQUIRE(queries.value().size() == 2);
    CHECK(queries.value()[0].text == "white cargo pants");
    CHECK(queries.value()[1].text == "white harness pants");
    CHECK(queries.value()[0].origin == QueryOrigin::supplementary);
    CHECK(queries.value()[0].rank == 0);
    CHECK(queries.value()[1].rank == 1);
}

TEST_CASE("generate_queries: five emitted, three kept, warning recorded") {
    ScriptedGenerator generator({{"many",
                                  {"overflowing"},
                                  "QUERY: q1\nQUERY: q2\nQUERY: q3\nQUERY: q4\nQUERY: q5"}});
    RefinedIntention refined;
    refined.intent_text = "overflowing intent. You must search base ~";
    refined.search_query = "base";
    PipelineConfig cfg;
    Warnings warnings;
    auto queries = generate_queries(refined, {}, cfg, generator, TemplateSet::builtin(),
                                    &warnings);
    REQUIRE(queries.ok());
    REQUIRE(queries.value().size() == 3);
    CHECK(queries.value()[2].text == "q3");
    REQUIRE_FALSE(warnings.empty());
    CHECK(warnings[0].rfind("query_generation:", 0) == 0);
}

TEST_CASE("generate_queries: empty output means documents sufficient") {
    ScriptedGenerator generator({}, "The documents already cover the intent.");
    RefinedIntention refined;
    refined.intent_text = "covered. You must search base ~";
    refined.search_query = "base";
    Warnings warnings;
    auto queries = generate_queries(refined, {}, PipelineConfig{}, generator,
                                    TemplateSet::builtin(), &warnings);
    REQUIRE(queries.ok());
    CHECK(queries.value().empty());
    CHECK(warnings.empty());
}

TEST_CASE("generate_queries: non-QUERY lines and blank payloads are ignored") {
    ScriptedGenerator generator({{"mixed",
                                  {"mixed output"},
                                  "Thinking aloud first.\nQUERY: real one\nQUERY:\nNOT A QUERY"}});
    RefinedIntention refined;
    refined.intent_text = "mixed output intent. You must search base ~";
    refined.search_query = "base";
    auto queries = generate_queries(refined, {}, PipelineConfig{}, generator,
                                    TemplateSet::builtin());
    REQUIRE(queries.ok());
    REQUIRE(queries.value().size() == 1);
    CHECK(queries.value()[0].text == "real one");
}

TEST_CASE("generate_queries: cap respects a smaller configured maximum") {
    ScriptedGenerator generator({{"many", {"overflowing"}, "QUERY: q1\nQUERY: q2\nQUERY: q3"}});
    RefinedIntention refined;
    refined.intent_text = "overflowing intent. You must search base ~";
    refined.search_query = "base";
    PipelineConfig cfg;
    cfg.max_supplementary_queries = 1;
    auto queries = generate_queries(refined, {}, cfg, generator, TemplateSet::builtin());
    REQUIRE(queries.ok());
    CHECK(queries.value().size() == 1);
}

TEST_CASE("generate_queries: document summaries reach the prompt") {
    // The scripted entry matches on the summary text, proving it was rendered.
    ScriptedGenerator generator({{"sum",
                                  {"- [doc:ctx-1] context summary body"},
                                  "QUERY: from summary"}});
    RefinedIntention refined;
    refined.intent_text = "intent. You must search base ~";
    refined.search_query = "base";
    std::vector<Document> docs{doc("ctx-1", "ignored", std::string("context summary body"))};
    auto queries = generate_queries(refined, docs, PipelineConfig{}, generator,
                                    TemplateSet::builtin());
    REQUIRE(queries.ok());
    REQUIRE(queries.value().size() == 1);
    CHECK(queries.value()[0].text == "from summary");
}

TEST_CASE("generate_queries: generator unavailability propagates") {
    ScriptedGenerator generator({}, "UNKNOWN", "scripted-v1", true);
    RefinedIntention refined;
    refined.intent_text = "intent. You must search base ~";
    refined.search_query = "base";
    auto queries = generate_queries(refined, {}, PipelineConfig{}, generator,
                                    TemplateSet::builtin());
    CHECK(queries.error().code == Errc::backend_unavailable);
}
