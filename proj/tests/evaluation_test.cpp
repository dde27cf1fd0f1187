#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cuem/digest.hpp"
#include "cuem/evaluation.hpp"
#include "cuem/json_codec.hpp"
#include "cuem/mocks.hpp"
#include "cuem/rng.hpp"
#include "cuem/text.hpp"
#include "doctest.h"

using namespace cuem;

namespace {

/// Judge whose output never parses as a verdict token.
class RamblingJudge : public Judge {
public:
    Result<std::string> compare(const std::string&, const std::string&, const std::string&,
                                const std::string&, const CallCtx& ctx) override {
        ctx.record(BackendKind::judge);
        return std::string("hard to say, both look fine to me");
    }
};

/// Judge that is permanently down.
class DownJudge : public Judge {
public:
    Result<std::string> compare(const std::string&, const std::string&, const std::string&,
                                const std::string&, const CallCtx& ctx) override {
        ctx.record(BackendKind::judge);
        return make_error<std::string>(Errc::backend_unavailable, "judge offline");
    }
};

JudgedPair pair_with(double averaged) {
    JudgedPair p;
    p.case_id = "x";
    p.averaged = averaged;
    return p;
}

/// Plain memoized-recursion LCS over tokens, as an independent oracle.
std::size_t lcs_oracle(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
    std::function<std::size_t(std::size_t, std::size_t)> go =
        [&](std::size_t i, std::size_t j) -> std::size_t {
        if (i == a.size() || j == b.size()) return 0;
        auto key = std::make_pair(i, j);
        if (auto it = memo.find(key); it != memo.end()) return it->second;
        std::size_t best = a[i] == b[j] ? go(i + 1, j + 1) + 1
                                        : std::max(go(i + 1, j), go(i, j + 1));
        memo[key] = best;
        return best;
    };
    return go(0, 0);
}

std::string random_words(Rng& rng, std::size_t max_len) {
    static const std::vector<std::string> alphabet{"a", "b", "c", "d"};
    const auto len = rng.next_below(max_len + 1);
    std::string out;
    for (std::size_t i = 0; i < len; ++i) {
        if (!out.empty()) out += " ";
        out += alphabet[static_cast<std::size_t>(rng.next_below(alphabet.size()))];
    }
    return out;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

EvalCase make_case(const std::string& id, const std::string& query,
                   const std::string& candidate, const std::string& baseline,
                   const std::string& reference) {
    EvalCase c;
    c.case_id = id;
    c.query = query;
    c.candidate = candidate;
    c.baseline = baseline;
    c.reference = reference;
    return c;
}

}  // namespace

TEST_CASE("judge_pairwise scores a clearly better candidate as a full win") {
    LengthPreferringJudge judge;
    CallLedger ledger;
    CallCtx ctx{Deadline::none(), &ledger};
    auto pair = judge_pairwise(judge, "c1", "what is a moth",
                               "A moth is a mostly nocturnal winged insect.", "A bug.",
                               "Moths are nocturnal insects.", nullptr, ctx);
    REQUIRE(pair.ok());
    CHECK(pair.value().case_id == "c1");
    CHECK(pair.value().score_ab == 1.0);   // candidate first and longer
    CHECK(pair.value().score_ba == 0.0);   // baseline first but shorter
    CHECK(pair.value().averaged == 1.0);
    CHECK(ledger.count(BackendKind::judge) == 2);
}

TEST_CASE("judge_pairwise scores identical answers as a tie") {
    ReferenceOverlapJudge judge;
    auto pair = judge_pairwise(judge, "c2", "q", "The sparrow nests in Alaska",
                               "The sparrow nests in Alaska", "sparrow nests in Alaska");
    REQUIRE(pair.ok());
    CHECK(pair.value().score_ab == 0.5);
    CHECK(pair.value().score_ba == 0.5);
    CHECK(pair.value().averaged == 0.5);
}

TEST_CASE("order swap cancels pure positional bias exactly") {
    FirstPresentedJudge judge;
    auto pair = judge_pairwise(judge, "c3", "q", "answer one", "answer two", "ref");
    REQUIRE(pair.ok());
    CHECK(pair.value().score_ab == 1.0);
    CHECK(pair.value().score_ba == 1.0);
    CHECK(pair.value().averaged == 0.5);

    // Property: for any case texts the biased judge still averages to one half.
    Rng rng(17);
    std::vector<JudgedPair> pairs;
    for (int i = 0; i < 25; ++i) {
        auto p = judge_pairwise(judge, "p" + std::to_string(i), "query",
                                random_words(rng, 6) + " x", random_words(rng, 6) + " y",
                                "reference text");
        REQUIRE(p.ok());
        CHECK(p.value().averaged == 0.5);
        pairs.push_back(p.take());
    }
    CHECK(win_rate(pairs).value() == 0.5);
}

TEST_CASE("an unparseable judge is retried once per ordering then scored a tie") {
    RamblingJudge judge;
    CallLedger ledger;
    CallCtx ctx{Deadline::none(), &ledger};
    Warnings warnings;
    auto pair = judge_pairwise(judge, "c4", "q", "candidate", "baseline", "ref", &warnings,
                               ctx);
    REQUIRE(pair.ok());
    CHECK(pair.value().score_ab == 0.5);
    CHECK(pair.value().score_ba == 0.5);
    CHECK(pair.value().averaged == 0.5);
    CHECK(ledger.count(BackendKind::judge) == 4);  // two attempts per ordering
    REQUIRE(warnings.size() == 2);
    CHECK(warnings[0].find("unparseable") != std::string::npos);
}

TEST_CASE("judge verdict parsing is case and whitespace tolerant") {
    // ScriptedGenerator-style judges always emit bare tokens; wrap one to add noise.
    class NoisyJudge : public Judge {
    public:
        Result<std::string> compare(const std::string&, const std::string& first,
                                    const std::string& second, const std::string&,
                                    const CallCtx& ctx) override {
            ctx.record(BackendKind::judge);
            return first.size() >= second.size() ? std::string("  a \n") : std::string("tie");
        }
    };
    NoisyJudge judge;
    auto pair = judge_pairwise(judge, "c5", "q", "long candidate answer", "short", "ref");
    REQUIRE(pair.ok());
    CHECK(pair.value().score_ab == 1.0);  // "  a \n" reads as A
    CHECK(pair.value().score_ba == 0.5);  // "tie" reads as TIE
    CHECK(pair.value().averaged == doctest::Approx(0.75));
}

TEST_CASE("judge_pairwise rejects empty texts") {
    FirstPresentedJudge judge;
    CHECK(judge_pairwise(judge, "c", "", "cand", "base", "ref").code() ==
          Errc::precondition);
    CHECK(judge_pairwise(judge, "c", "q", "", "base", "ref").code() == Errc::precondition);
    CHECK(judge_pairwise(judge, "c", "q", "cand", "", "ref").code() == Errc::precondition);
    CHECK(judge_pairwise(judge, "c", "q", "cand", "base", "").code() == Errc::precondition);
}

TEST_CASE("judge outages propagate to the caller") {
    DownJudge judge;
    Warnings warnings;
    auto pair = judge_pairwise(judge, "c6", "q", "cand", "base", "ref", &warnings);
    REQUIRE(!pair.ok());
    CHECK(pair.code() == Errc::backend_unavailable);
    CHECK(warnings.empty());
}

TEST_CASE("win_rate averages the order-corrected scores") {
    CHECK(win_rate({pair_with(1.0)}).value() == 1.0);
    CHECK(win_rate({pair_with(1.0), pair_with(0.0)}).value() == 0.5);
    CHECK(win_rate({pair_with(0.25), pair_with(0.75), pair_with(0.5)}).value() ==
          doctest::Approx(0.5));
    CHECK(win_rate({}).code() == Errc::precondition);
}

TEST_CASE("monte_carlo_se is exactly zero for constant scores") {
    std::vector<double> scores(50, 0.7);
    CHECK(monte_carlo_se(scores, 0.5, 1).value() == 0.0);
}

TEST_CASE("monte_carlo_se with the full sample is exactly zero") {
    std::vector<double> scores{0.1, 0.9, 0.4, 0.6, 0.2};
    CHECK(monte_carlo_se(scores, 1.0, 3).value() == 0.0);
}

TEST_CASE("monte_carlo_se is reproducible per seed") {
    std::vector<double> scores;
    Rng rng(5);
    for (int i = 0; i < 40; ++i) scores.push_back(rng.next_unit());
    const auto a = monte_carlo_se(scores, 0.5, 42).value();
    const auto b = monte_carlo_se(scores, 0.5, 42).value();
    const auto c = monte_carlo_se(scores, 0.5, 43).value();
    CHECK(a == b);
    CHECK(a != c);
    CHECK(a > 0.0);
}

TEST_CASE("monte_carlo_se validates its inputs") {
    CHECK(monte_carlo_se({1.0}, 0.5, 0).code() == Errc::precondition);
    CHECK(monte_carlo_se({1.0, 0.0}, 0.0, 0).code() == Errc::precondition);
    CHECK(monte_carlo_se({1.0, 0.0}, 1.5, 0).code() == Errc::precondition);
    CHECK(monte_carlo_se({1.0, 0.0}, 0.5, 0, 0).code() == Errc::precondition);
}

TEST_CASE("monte_carlo_se tracks the analytic error for a half-and-half sample") {
    // 500 ones and 500 zeros; subsample mean of m=500 without replacement has
    // standard error sqrt(p(1-p)/m) * sqrt(1 - m/n) ~= 0.0158.
    std::vector<double> scores;
    for (int i = 0; i < 1000; ++i) scores.push_back(i < 500 ? 1.0 : 0.0);
    const double analytic = std::sqrt(0.25 / 500.0) * std::sqrt(1.0 - 500.0 / 1000.0);
    const auto se = monte_carlo_se(scores, 0.5, 7).value();
    CHECK(se == doctest::Approx(analytic).epsilon(0.20));
}

TEST_CASE("rouge_l on identical, disjoint, and empty texts") {
    const auto same = rouge_l("the moth rests", "the moth rests");
    CHECK(same.precision == 1.0);
    CHECK(same.recall == 1.0);
    CHECK(same.f == 1.0);

    const auto disjoint = rouge_l("alpha beta", "gamma delta");
    CHECK(disjoint.precision == 0.0);
    CHECK(disjoint.recall == 0.0);
    CHECK(disjoint.f == 0.0);

    const auto empty_hyp = rouge_l("alpha", "");
    CHECK(empty_hyp.f == 0.0);
    const auto empty_ref = rouge_l("", "alpha");
    CHECK(empty_ref.f == 0.0);
}

TEST_CASE("rouge_l worked example") {
    // LCS("a b c d", "a c") = "a c": precision 2/2, recall 2/4.
    const auto score = rouge_l("a b c d", "a c");
    CHECK(score.precision == doctest::Approx(1.0));
    CHECK(score.recall == doctest::Approx(0.5));
    CHECK(score.f == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("rouge_l is case-folding through the shared tokenizer") {
    const auto score = rouge_l("The Moth", "the moth");
    CHECK(score.f == 1.0);
}

TEST_CASE("rouge_l agrees with a reference LCS on random token streams") {
    Rng rng(99);
    for (int round = 0; round < 200; ++round) {
        const auto ref_text = random_words(rng, 12);
        const auto hyp_text = random_words(rng, 12);
        const auto ref = tokenize(ref_text);
        const auto hyp = tokenize(hyp_text);
        const auto got = rouge_l(ref_text, hyp_text);
        if (ref.empty() || hyp.empty()) {
            CHECK(got.precision == 0.0);
            CHECK(got.recall == 0.0);
            CHECK(got.f == 0.0);
            continue;
        }
        const auto lcs = static_cast<double>(lcs_oracle(ref, hyp));
        CHECK(got.precision == doctest::Approx(lcs / static_cast<double>(hyp.size())));
        CHECK(got.recall == doctest::Approx(lcs / static_cast<double>(ref.size())));
        const double expected_f =
            lcs == 0.0 ? 0.0
                       : 2.0 * got.precision * got.recall / (got.precision + got.recall);
        CHECK(got.f == doctest::Approx(expected_f));
    }
}

TEST_CASE("rouge_l self-comparison is always perfect") {
    Rng rng(7);
    for (int round = 0; round < 50; ++round) {
        auto text = random_words(rng, 10);
        if (tokenize(text).empty()) continue;
        const auto score = rouge_l(text, text);
        CHECK(score.precision == 1.0);
        CHECK(score.recall == 1.0);
        CHECK(score.f == 1.0);
    }
}

TEST_CASE("ner_recall counts case-folded reference hits") {
    CHECK(ner_recall({"Savannah Sparrow", "Alaska"}, {"savannah sparrow"}).value() == 0.5);
    CHECK(ner_recall({"Savannah Sparrow", "Alaska"}, {"savannah sparrow", "ALASKA"}).value() ==
          1.0);
    CHECK(ner_recall({"Alaska"}, {"Europe"}).value() == 0.0);
    // Duplicates fold into one entity on either side.
    CHECK(ner_recall({"Alaska", "alaska"}, {"Alaska"}).value() == 1.0);
    CHECK(ner_recall({}, {"Alaska"}).code() == Errc::empty_reference);
    CHECK(ner_recall({"  "}, {"Alaska"}).code() == Errc::empty_reference);
}

TEST_CASE("ner_recall never drops when the hypothesis set grows") {
    const std::vector<std::string> ref{"Erebia Moth", "Alaska", "Mediterranean"};
    std::vector<std::string> hyp;
    double last = ner_recall(ref, hyp).value();
    for (const auto& add : {"Alaska", "Erebia Moth", "Europe", "Mediterranean"}) {
        hyp.push_back(add);
        const double now = ner_recall(ref, hyp).value();
        CHECK(now >= last);
        last = now;
    }
    CHECK(last == 1.0);
}

TEST_CASE("extract_capitalized_entities finds maximal capitalized runs") {
    const auto entities = extract_capitalized_entities(
        "the Savannah Sparrow flies over Alaska with the Erebia Moth");
    REQUIRE(entities.size() == 3);
    CHECK(entities[0] == "Savannah Sparrow");
    CHECK(entities[1] == "Alaska");
    CHECK(entities[2] == "Erebia Moth");
}

TEST_CASE("extract_capitalized_entities strips edge punctuation and deduplicates") {
    const auto entities =
        extract_capitalized_entities("It lives in Alaska (Aleutian Islands). Alaska is cold.");
    REQUIRE(entities.size() == 3);
    CHECK(entities[0] == "It");  // sentence-initial capitals count by design
    CHECK(entities[1] == "Alaska");
    CHECK(entities[2] == "Aleutian Islands");
    CHECK(extract_capitalized_entities("nothing capitalized here").empty());
    CHECK(extract_capitalized_entities("").empty());
}

TEST_CASE("evqa_match scores a curated biology question batch") {
    struct Sample {
        std::string gold;
        std::string prediction;
        bool expected;
    };
    const std::vector<Sample> samples{
        {"carbuncles, hemorrhages, sores, spleen trouble, cancer and wounds.|lowers blood "
         "sugar and cholesterol| cure indigestion",
         "The plant in the image is Echinochloa crus-galli, commonly known as Barnyard "
         "Millet or Barnyardgrass. According to the search results, this plant has various "
         "traditional medicinal uses, including being a folk remedy for treating carbuncles, "
         "haemorrhages, sores, spleen trouble, cancer, and wounds.",
         true},
        {"Mediterranean region|Mediterranean region|Mediterranean region",
         "Mediterranean region, Europe", true},
        {"fields, open woodland, bushy or rocky areas, parks and gardens",
         "streams, ponds, and rivers and streams", false},
        {"10 to 11 months.", "10 to 12 months.", false},
        {"white", "white", true},
        {"central", "central and southcentral", true},
        {"Aleutian Savannah Sparrow", "Aleutian Savannah Sparrow", true},
    };
    for (const auto& s : samples) {
        CAPTURE(s.gold);
        CHECK(evqa_match(s.prediction, s.gold).value() == s.expected);
    }
}

TEST_CASE("evqa_match normalization details") {
    // Spelling fold: "ae" collapses to "e" on both sides.
    CHECK(evqa_match("it treats haemorrhages", "hemorrhages").value());
    CHECK(evqa_match("it treats hemorrhages", "haemorrhages").value());
    // Case and punctuation are ignored.
    CHECK(evqa_match("The Mediterranean Region!", "mediterranean region").value());
    // Blank alternatives between separators are skipped, not matched.
    CHECK(evqa_match("white", "|white").value());
    CHECK(evqa_match("anything", "|").value() == false);
    CHECK(evqa_match("", "white").value() == false);
    CHECK(evqa_match("white", "  ").code() == Errc::precondition);
}

TEST_CASE("evaluate_cases aggregates judged and overlap metrics") {
    std::vector<EvalCase> cases;
    cases.push_back(make_case("e1", "moth habitat",
                              "The moth lives on rocky alpine slopes in Europe",
                              "I do not know", "The moth lives on rocky alpine slopes"));
    cases.push_back(make_case("e2", "sparrow nest", "The sparrow nests in Alaska",
                              "The sparrow nests in Alaska",
                              "The sparrow nests in Alaska"));
    cases.push_back(make_case("e3", "millet uses", "Unrelated words entirely",
                              "Barnyard millet cures indigestion",
                              "Barnyard millet cures indigestion"));

    ReferenceOverlapJudge judge;
    CallLedger ledger;
    CallCtx ctx{Deadline::none(), &ledger};
    Warnings warnings;
    auto report = evaluate_cases(cases, judge, {}, &warnings, ctx);
    REQUIRE(report.ok());

    // e1 is a clean win (1.0), e2 a tie (0.5), e3 a clean loss (0.0).
    CHECK(report.value().win_rate == doctest::Approx(0.5));
    CHECK(report.value().n == 3);
    CHECK(ledger.count(BackendKind::judge) == 6);

    const auto expected_se = monte_carlo_se({1.0, 0.5, 0.0}, 0.5, 0).value();
    CHECK(report.value().se == expected_se);
    CHECK(report.value().se > 0.0);

    // Mean token-overlap scores, candidate against reference.
    CHECK(report.value().rouge_l.precision == doctest::Approx((7.0 / 9.0 + 1.0 + 0.0) / 3.0));
    CHECK(report.value().rouge_l.recall == doctest::Approx(2.0 / 3.0));
    CHECK(report.value().rouge_l.f == doctest::Approx((0.875 + 1.0 + 0.0) / 3.0));

    // Entity recall per case: 1.0 ("The"), 1.0 ("The Alaska"), 0.0 ("Barnyard").
    CHECK(report.value().ner_recall == doctest::Approx(2.0 / 3.0));
    CHECK(warnings.empty());
}

TEST_CASE("evaluate_cases with one case reports zero standard error") {
    std::vector<EvalCase> cases{make_case("solo", "q", "answer text", "other text",
                                          "answer text")};
    ReferenceOverlapJudge judge;
    Warnings warnings;
    auto report = evaluate_cases(cases, judge, {}, &warnings);
    REQUIRE(report.ok());
    CHECK(report.value().se == 0.0);
    CHECK(report.value().n == 1);
    REQUIRE(!warnings.empty());
    CHECK(warnings[0].find("standard error") != std::string::npos);
}

TEST_CASE("evaluate_cases surfaces judge failures") {
    std::vector<EvalCase> cases{make_case("e1", "q", "cand", "base", "ref"),
                                make_case("e2", "q", "cand", "base", "ref")};
    DownJudge judge;
    auto report = evaluate_cases(cases, judge);
    REQUIRE(!report.ok());
    CHECK(report.code() == Errc::backend_unavailable);
    CHECK(evaluate_cases({}, judge).code() == Errc::precondition);
}

TEST_CASE("evaluate_cases warns when no reference has entities") {
    std::vector<EvalCase> cases{
        make_case("e1", "q", "some answer here", "other answer", "all lowercase reference")};
    ReferenceOverlapJudge judge;
    Warnings warnings;
    auto report = evaluate_cases(cases, judge, {}, &warnings);
    REQUIRE(report.ok());
    CHECK(report.value().ner_recall == 0.0);
    bool warned = false;
    for (const auto& w : warnings) {
        if (w.find("entities") != std::string::npos) warned = true;
    }
    CHECK(warned);
}

TEST_CASE("eval cases round-trip through a line-delimited file") {
    std::vector<EvalCase> cases;
    auto full = make_case("r1", "what bird is this", "Aleutian Savannah Sparrow",
                          "Passerculus sandwichensis", "Aleutian Savannah Sparrow");
    full.image_id = "img-7";
    full.gold = "Aleutian Savannah Sparrow";
    cases.push_back(full);
    cases.push_back(make_case("r2", "q2", "cand two", "base two", "ref two"));

    const auto path = temp_path("cuem_eval_cases_test.jsonl");
    REQUIRE(save_eval_cases(cases, path).ok());
    auto loaded = load_eval_cases(path);
    REQUIRE(loaded.ok());
    REQUIRE(loaded.value().size() == 2);
    for (std::size_t i = 0; i < cases.size(); ++i) {
        CHECK(digest_of(cases[i]) == digest_of(loaded.value()[i]));
    }
    CHECK(loaded.value()[0].image_id == "img-7");
    CHECK(loaded.value()[1].gold.empty());
    std::remove(path.c_str());
}

TEST_CASE("eval case files reject malformed lines with their line number") {
    const auto path = temp_path("cuem_eval_cases_bad.jsonl");
    {
        std::ofstream out(path, std::ios::binary);
        out << R"({"case_id":"ok","query":"q","candidate":"c","baseline":"b","reference":"r"})"
            << "\n\n";
        out << "not json at all\n";
    }
    auto loaded = load_eval_cases(path);
    REQUIRE(!loaded.ok());
    CHECK(loaded.code() == Errc::parse_error);
    CHECK(loaded.error().message.find(":3") != std::string::npos);
    std::remove(path.c_str());

    // Missing a required key is also a parse error.
    {
        std::ofstream out(path, std::ios::binary);
        out << R"({"case_id":"ok","query":"q"})" << "\n";
    }
    CHECK(load_eval_cases(path).code() == Errc::parse_error);
    std::remove(path.c_str());

    CHECK(load_eval_cases("/nonexistent/dir/cases.jsonl").code() == Errc::io_error);
}

TEST_CASE("eval reports round-trip through JSON") {
    EvalReport report;
    report.win_rate = 0.625;
    report.se = 0.04;
    report.rouge_l = {0.7, 0.6, 0.645};
    report.ner_recall = 0.5;
    report.n = 8;
    auto back = eval_report_from_json(to_json(report));
    REQUIRE(back.ok());
    CHECK(to_json(back.value()) == to_json(report));
    CHECK(eval_report_from_json(Json::object()).code() == Errc::parse_error);
}
