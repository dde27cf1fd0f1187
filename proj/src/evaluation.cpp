#include "cuem/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <future>
#include <optional>
#include <set>
#include <sstream>

#include "cuem/rng.hpp"
#include "cuem/text.hpp"

namespace cuem {

namespace {

/// Maps a verdict token to the first-presented response's score, or nullopt
/// when the output is not a bare A / B / TIE.
std::optional<double> parse_verdict(const std::string& raw) {
    std::string token = trim(raw);
    std::transform(token.begin(), token.end(), token.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    if (token == "A") return 1.0;
    if (token == "B") return 0.0;
    if (token == "TIE") return 0.5;
    return std::nullopt;
}

/// One ordering: ask, retry once on unparseable output, fall back to a tie.
Result<double> judged_ordering(Judge& judge, const std::string& case_id,
                               const std::string& query, const std::string& first,
                               const std::string& second, const std::string& reference,
                               Warnings* warnings, const CallCtx& ctx) {
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto raw = judge.compare(query, first, second, reference, ctx);
        if (!raw.ok()) return raw.error();
        if (auto score = parse_verdict(raw.value()); score.has_value()) return *score;
    }
    warn(warnings, "judge", "case " + case_id + ": unparseable verdict twice, scoring a tie");
    return 0.5;
}

}  // namespace

Result<JudgedPair> judge_pairwise(Judge& judge, const std::string& case_id,
                                  const std::string& query, const std::string& candidate,
                                  const std::string& baseline, const std::string& reference,
                                  Warnings* warnings, const CallCtx& ctx) {
    if (query.empty() || candidate.empty() || baseline.empty() || reference.empty()) {
        return make_error<JudgedPair>(Errc::precondition,
                                      "judge_pairwise needs non-empty texts");
    }
    auto ab = judged_ordering(judge, case_id, query, candidate, baseline, reference, warnings,
                              ctx);
    if (!ab.ok()) return ab.error();
    auto ba = judged_ordering(judge, case_id, query, baseline, candidate, reference, warnings,
                              ctx);
    if (!ba.ok()) return ba.error();

    JudgedPair pair;
    pair.case_id = case_id;
    pair.score_ab = ab.value();
    pair.score_ba = ba.value();
    pair.averaged = (pair.score_ab + (1.0 - pair.score_ba)) / 2.0;
    return pair;
}

Result<double> win_rate(const std::vector<JudgedPair>& pairs) {
    if (pairs.empty()) {
        return make_error<double>(Errc::precondition, "win_rate needs at least one pair");
    }
    double sum = 0.0;
    for (const auto& p : pairs) sum += p.averaged;
    return sum / static_cast<double>(pairs.size());
}

Result<double> monte_carlo_se(const std::vector<double>& scores, double subsample_fraction,
                              std::uint64_t seed, int n_resamples) {
    if (scores.size() < 2) {
        return make_error<double>(Errc::precondition, "monte_carlo_se needs >= 2 scores");
    }
    if (!(subsample_fraction > 0.0) || subsample_fraction > 1.0) {
        return make_error<double>(Errc::precondition, "subsample_fraction must be in (0, 1]");
    }
    if (n_resamples < 1) {
        return make_error<double>(Errc::precondition, "n_resamples must be >= 1");
    }

    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
    if (*lo == *hi) return 0.0;  // constant scores subsample to a constant mean

    const std::size_t n = scores.size();
    const auto m = static_cast<std::size_t>(
        std::ceil(subsample_fraction * static_cast<double>(n)));
    if (m >= n) return 0.0;  // every subsample is the whole set

    Rng rng(seed);
    std::vector<double> means;
    means.reserve(static_cast<std::size_t>(n_resamples));
    for (int r = 0; r < n_resamples; ++r) {
        auto indices = sample_without_replacement(n, m, rng);
        std::sort(indices.begin(), indices.end());  // index order fixes the summation order
        double sum = 0.0;
        for (auto idx : indices) sum += scores[idx];
        means.push_back(sum / static_cast<double>(m));
    }

    double mean_of_means = 0.0;
    for (double v : means) mean_of_means += v;
    mean_of_means /= static_cast<double>(means.size());
    double variance = 0.0;
    for (double v : means) variance += (v - mean_of_means) * (v - mean_of_means);
    variance /= static_cast<double>(means.size());
    return std::sqrt(variance);
}

RougeScore rouge_l(const std::string& reference, const std::string& hypothesis) {
    const auto ref = tokenize(reference);
    const auto hyp = tokenize(hypothesis);
    if (ref.empty() || hyp.empty()) return {};

    // LCS length with a rolling row: O(|ref| * |hyp|) time, O(|hyp|) space.
    std::vector<std::size_t> prev(hyp.size() + 1, 0);
    std::vector<std::size_t> curr(hyp.size() + 1, 0);
    for (std::size_t i = 1; i <= ref.size(); ++i) {
        for (std::size_t j = 1; j <= hyp.size(); ++j) {
            curr[j] = ref[i - 1] == hyp[j - 1] ? prev[j - 1] + 1
                                               : std::max(prev[j], curr[j - 1]);
        }
        std::swap(prev, curr);
    }
    const auto lcs = static_cast<double>(prev[hyp.size()]);

    RougeScore score;
    score.precision = lcs / static_cast<double>(hyp.size());
    score.recall = lcs / static_cast<double>(ref.size());
    score.f = score.precision + score.recall > 0.0
                  ? 2.0 * score.precision * score.recall / (score.precision + score.recall)
                  : 0.0;
    return score;
}

Result<double> ner_recall(const std::vector<std::string>& reference_entities,
                          const std::vector<std::string>& hypothesis_entities) {
    auto fold = [](const std::vector<std::string>& entities) {
        std::set<std::string> folded;
        for (const auto& e : entities) {
            std::string lowered = collapse_whitespace(e);
            std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                           [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
            if (!lowered.empty()) folded.insert(std::move(lowered));
        }
        return folded;
    };
    const auto ref = fold(reference_entities);
    if (ref.empty()) {
        return make_error<double>(Errc::empty_reference, "reference entity set is empty");
    }
    const auto hyp = fold(hypothesis_entities);
    std::size_t hits = 0;
    for (const auto& e : ref) hits += hyp.count(e);
    return static_cast<double>(hits) / static_cast<double>(ref.size());
}

std::vector<std::string> extract_capitalized_entities(const std::string& text) {
    std::istringstream in(text);
    std::string word;
    std::vector<std::string> entities;
    std::string run;
    auto flush = [&] {
        if (!run.empty() &&
            std::find(entities.begin(), entities.end(), run) == entities.end()) {
            entities.push_back(run);
        }
        run.clear();
    };
    while (in >> word) {
        // Strip edge punctuation so "Moth." and "(Alaska)" read as words; the
        // stripped punctuation still terminates a run, keeping phrases inside
        // one sentence clause together without gluing clauses across it.
        std::size_t begin = 0;
        std::size_t end = word.size();
        while (begin < end && !std::isalnum(static_cast<unsigned char>(word[begin]))) ++begin;
        while (end > begin && !std::isalnum(static_cast<unsigned char>(word[end - 1]))) --end;
        const std::string core = word.substr(begin, end - begin);
        if (!core.empty() && std::isupper(static_cast<unsigned char>(core[0]))) {
            if (begin > 0) flush();  // leading punctuation opens a new run
            if (!run.empty()) run += " ";
            run += core;
            if (end < word.size()) flush();  // trailing punctuation closes it
        } else {
            flush();
        }
    }
    flush();
    return entities;
}

namespace {

/// evqa normalization: lowercase, punctuation to spaces, collapsed
/// whitespace, then a single left-to-right "ae" -> "e" fold to absorb the
/// British/American spelling variance.
std::string evqa_normalize(const std::string& s) {
    std::string mapped;
    mapped.reserve(s.size());
    for (char c : s) {
        const auto uc = static_cast<unsigned char>(c);
        if (std::isalnum(uc)) {
            mapped += static_cast<char>(std::tolower(uc));
        } else {
            mapped += ' ';
        }
    }
    mapped = collapse_whitespace(mapped);
    std::string folded;
    folded.reserve(mapped.size());
    for (std::size_t i = 0; i < mapped.size(); ++i) {
        if (mapped[i] == 'a' && i + 1 < mapped.size() && mapped[i + 1] == 'e') {
            folded += 'e';
            ++i;
        } else {
            folded += mapped[i];
        }
    }
    return folded;
}

}  // namespace

Result<bool> evqa_match(const std::string& prediction, const std::string& gold) {
    if (trim(gold).empty()) {
        return make_error<bool>(Errc::precondition, "gold answer must be non-empty");
    }
    const std::string normalized_prediction = evqa_normalize(prediction);
    std::size_t start = 0;
    while (start <= gold.size()) {
        const std::size_t bar = gold.find('|', start);
        const std::string alternative =
            gold.substr(start, bar == std::string::npos ? std::string::npos : bar - start);
        const std::string normalized = evqa_normalize(alternative);
        if (!normalized.empty() &&
            normalized_prediction.find(normalized) != std::string::npos) {
            return true;
        }
        if (bar == std::string::npos) break;
        start = bar + 1;
    }
    return false;
}

Json to_json(const EvalCase& v) {
    Json j;
    j["baseline"] = v.baseline;
    j["candidate"] = v.candidate;
    j["case_id"] = v.case_id;
    j["gold"] = v.gold;
    j["image_id"] = v.image_id;
    j["query"] = v.query;
    j["reference"] = v.reference;
    return j;
}

Result<EvalCase> eval_case_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("case_id") || !j.contains("query") ||
        !j.contains("candidate") || !j.contains("baseline") || !j.contains("reference")) {
        return make_error<EvalCase>(Errc::parse_error,
                                    "eval case needs case_id, query, candidate, baseline, "
                                    "reference");
    }
    EvalCase c;
    c.case_id = j["case_id"].get<std::string>();
    c.query = j["query"].get<std::string>();
    c.candidate = j["candidate"].get<std::string>();
    c.baseline = j["baseline"].get<std::string>();
    c.reference = j["reference"].get<std::string>();
    c.image_id = j.value("image_id", std::string{});
    c.gold = j.value("gold", std::string{});
    return c;
}

Result<std::vector<EvalCase>> load_eval_cases(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        return make_error<std::vector<EvalCase>>(Errc::io_error, "cannot read " + path);
    }
    std::vector<EvalCase> cases;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto parsed = parse_json(line);
        if (!parsed.ok()) {
            return make_error<std::vector<EvalCase>>(
                Errc::parse_error, path + ":" + std::to_string(line_no) + ": " +
                                       parsed.error().message);
        }
        auto c = eval_case_from_json(parsed.value());
        if (!c.ok()) {
            return make_error<std::vector<EvalCase>>(
                Errc::parse_error,
                path + ":" + std::to_string(line_no) + ": " + c.error().message);
        }
        cases.push_back(c.take());
    }
    return cases;
}

Result<void> save_eval_cases(const std::vector<EvalCase>& cases, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) return make_error<void>(Errc::io_error, "cannot write " + path);
    for (const auto& c : cases) out << to_json(c).dump() << "\n";
    return {};
}

Json to_json(const RougeScore& v) {
    Json j;
    j["f"] = v.f;
    j["precision"] = v.precision;
    j["recall"] = v.recall;
    return j;
}

Json to_json(const JudgedPair& v) {
    Json j;
    j["averaged"] = v.averaged;
    j["case_id"] = v.case_id;
    j["score_ab"] = v.score_ab;
    j["score_ba"] = v.score_ba;
    return j;
}

Json to_json(const EvalReport& v) {
    Json j;
    j["n"] = v.n;
    j["ner_recall"] = v.ner_recall;
    j["rouge_l"] = to_json(v.rouge_l);
    j["se"] = v.se;
    j["win_rate"] = v.win_rate;
    return j;
}

Result<EvalReport> eval_report_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("win_rate") || !j.contains("se") ||
        !j.contains("rouge_l") || !j.contains("ner_recall") || !j.contains("n")) {
        return make_error<EvalReport>(Errc::parse_error, "report missing fields");
    }
    EvalReport r;
    r.win_rate = j["win_rate"].get<double>();
    r.se = j["se"].get<double>();
    r.ner_recall = j["ner_recall"].get<double>();
    r.n = j["n"].get<int>();
    const auto& rj = j["rouge_l"];
    if (!rj.is_object() || !rj.contains("precision") || !rj.contains("recall") ||
        !rj.contains("f")) {
        return make_error<EvalReport>(Errc::parse_error, "report rouge_l malformed");
    }
    r.rouge_l.precision = rj["precision"].get<double>();
    r.rouge_l.recall = rj["recall"].get<double>();
    r.rouge_l.f = rj["f"].get<double>();
    return r;
}

Result<EvalReport> evaluate_cases(const std::vector<EvalCase>& cases, Judge& judge,
                                  const EvalConfig& cfg, Warnings* warnings,
                                  const CallCtx& ctx) {
    if (cases.empty()) {
        return make_error<EvalReport>(Errc::precondition, "evaluate_cases needs cases");
    }

    // Judge every case concurrently, each with a private warning sink so the
    // merged warning order follows input order, not completion order.
    std::vector<Warnings> local_warnings(cases.size());
    std::vector<std::future<Result<JudgedPair>>> futures;
    futures.reserve(cases.size());
    for (std::size_t i = 0; i < cases.size(); ++i) {
        futures.push_back(std::async(std::launch::async, [&judge, &cases, &local_warnings, &ctx,
                                                          i] {
            const auto& c = cases[i];
            return judge_pairwise(judge, c.case_id, c.query, c.candidate, c.baseline,
                                  c.reference, &local_warnings[i], ctx);
        }));
    }
    std::vector<JudgedPair> pairs;
    pairs.reserve(cases.size());
    std::optional<Error> first_failure;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        auto pair = futures[i].get();
        if (pair.ok()) {
            pairs.push_back(pair.take());
        } else if (!first_failure.has_value()) {
            first_failure = pair.error();
        }
    }
    for (auto& local : local_warnings) {
        for (auto& w : local) {
            if (warnings != nullptr) warnings->push_back(std::move(w));
        }
    }
    if (first_failure.has_value()) {
        return make_error<EvalReport>(first_failure->code, first_failure->message);
    }

    EvalReport report;
    report.n = static_cast<int>(cases.size());
    report.win_rate = win_rate(pairs).take();

    std::vector<double> averaged;
    averaged.reserve(pairs.size());
    for (const auto& p : pairs) averaged.push_back(p.averaged);
    if (averaged.size() >= 2) {
        report.se =
            monte_carlo_se(averaged, cfg.subsample_fraction, cfg.seed, cfg.n_resamples).take();
    } else {
        warn(warnings, "evaluate", "single case: standard error reported as 0");
        report.se = 0.0;
    }

    double ner_sum = 0.0;
    std::size_t ner_count = 0;
    for (const auto& c : cases) {
        const auto rouge = rouge_l(c.reference, c.candidate);
        report.rouge_l.precision += rouge.precision;
        report.rouge_l.recall += rouge.recall;
        report.rouge_l.f += rouge.f;

        auto recall = ner_recall(extract_capitalized_entities(c.reference),
                                 extract_capitalized_entities(c.candidate));
        if (recall.ok()) {
            ner_sum += recall.value();
            ++ner_count;
        } else {
            warn(warnings, "evaluate",
                 "case " + c.case_id + ": reference has no entities, skipped in NER recall");
        }
    }
    report.rouge_l.precision /= static_cast<double>(cases.size());
    report.rouge_l.recall /= static_cast<double>(cases.size());
    report.rouge_l.f /= static_cast<double>(cases.size());
    report.ner_recall = ner_count > 0 ? ner_sum / static_cast<double>(ner_count) : 0.0;
    if (ner_count == 0) {
        warn(warnings, "evaluate", "no case had reference entities; NER recall reported as 0");
    }
    return report;
}

}  // namespace cuem
