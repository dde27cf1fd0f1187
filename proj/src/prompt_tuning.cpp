#include "cuem/prompt_tuning.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>

#include "cuem/rng.hpp"
#include "cuem/text.hpp"

namespace cuem {

Result<PromptTemplate> make_prompt_template(std::string template_id, int version,
                                            std::vector<std::string> fixed_sections,
                                            std::string instruction_section,
                                            std::vector<LabeledSample> example_slots) {
    if (template_id.empty()) {
        return make_error<PromptTemplate>(Errc::precondition, "template_id must be non-empty");
    }
    if (version < 0) {
        return make_error<PromptTemplate>(Errc::precondition, "version must be >= 0");
    }
    PromptTemplate tpl;
    tpl.template_id = std::move(template_id);
    tpl.version = version;
    tpl.fixed_sections = std::move(fixed_sections);
    tpl.instruction_section = std::move(instruction_section);
    tpl.example_slots = std::move(example_slots);
    return tpl;
}

std::string render_template_body(const PromptTemplate& tpl) {
    std::string out;
    for (const auto& section : tpl.fixed_sections) {
        out += section;
        out += "\n";
    }
    out += tpl.instruction_section;
    out += "\n";
    for (const auto& [input, label] : tpl.example_slots) {
        out += "\nInput: " + input + "\nLabel: " + label + "\n";
    }
    return out;
}

std::string render_prompt(const PromptTemplate& tpl, const std::string& input) {
    return render_template_body(tpl) + "\nInput: " + input + "\nLabel:";
}

std::string normalize_label(const std::string& s) {
    std::string lowered = collapse_whitespace(s);
    std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return lowered;
}

Json to_json(const PromptTemplate& v) {
    Json slots = Json::array();
    for (const auto& [input, label] : v.example_slots) {
        slots.push_back(Json{{"input", input}, {"label", label}});
    }
    Json j;
    j["example_slots"] = std::move(slots);
    j["fixed_sections"] = v.fixed_sections;
    j["instruction_section"] = v.instruction_section;
    j["template_id"] = v.template_id;
    j["version"] = v.version;
    return j;
}

Json to_json(const ForwardResult& v) {
    Json j;
    j["correct"] = v.correct;
    j["input"] = v.input;
    j["label"] = v.label;
    j["predicted"] = v.predicted;
    return j;
}

Json to_json(const TuningReport& v) {
    Json j;
    j["best_version"] = v.best_version;
    j["iterations"] = v.iterations;
    j["val_scores"] = v.val_scores;
    return j;
}

Result<PromptTemplate> prompt_template_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("template_id") || !j.contains("version") ||
        !j.contains("fixed_sections") || !j.contains("instruction_section") ||
        !j.contains("example_slots")) {
        return make_error<PromptTemplate>(Errc::parse_error, "template sidecar missing fields");
    }
    std::vector<LabeledSample> slots;
    for (const auto& sj : j["example_slots"]) {
        if (!sj.is_object() || !sj.contains("input") || !sj.contains("label")) {
            return make_error<PromptTemplate>(Errc::parse_error, "malformed example slot");
        }
        slots.emplace_back(sj["input"].get<std::string>(), sj["label"].get<std::string>());
    }
    return make_prompt_template(j["template_id"].get<std::string>(), j["version"].get<int>(),
                                j["fixed_sections"].get<std::vector<std::string>>(),
                                j["instruction_section"].get<std::string>(), std::move(slots));
}

Result<TuningReport> tuning_report_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("iterations") || !j.contains("val_scores") ||
        !j.contains("best_version")) {
        return make_error<TuningReport>(Errc::parse_error, "report missing fields");
    }
    TuningReport r;
    r.iterations = j["iterations"].get<int>();
    r.val_scores = j["val_scores"].get<std::vector<double>>();
    r.best_version = j["best_version"].get<int>();
    return r;
}

Result<std::vector<ForwardResult>> forward_pass(const PromptTemplate& tpl,
                                                const std::vector<LabeledSample>& samples,
                                                TextGenerator& generator, const CallCtx& ctx) {
    if (samples.empty()) {
        return make_error<std::vector<ForwardResult>>(Errc::precondition,
                                                      "forward_pass needs samples");
    }
    std::vector<std::future<Result<std::string>>> futures;
    futures.reserve(samples.size());
    for (const auto& sample : samples) {
        futures.push_back(std::async(std::launch::async, [&tpl, &generator, &ctx, &sample] {
            return generator.generate(render_prompt(tpl, sample.first), DecodingParams{}, ctx);
        }));
    }
    std::vector<ForwardResult> out;
    out.reserve(samples.size());
    std::optional<Error> first_failure;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        auto predicted = futures[i].get();
        if (!predicted.ok()) {
            if (!first_failure.has_value()) first_failure = predicted.error();
            continue;
        }
        ForwardResult r;
        r.input = samples[i].first;
        r.predicted = trim(predicted.value());
        r.label = samples[i].second;
        r.correct = normalize_label(r.predicted) == normalize_label(r.label);
        out.push_back(std::move(r));
    }
    if (first_failure.has_value()) {
        return make_error<std::vector<ForwardResult>>(first_failure->code,
                                                      first_failure->message);
    }
    return out;
}

Result<PromptTemplate> backward_pass(const PromptTemplate& tpl,
                                     const std::vector<ForwardResult>& results, int n_correct,
                                     int n_incorrect, std::uint64_t seed, Warnings* warnings) {
    if (n_correct < 0 || n_incorrect < 0) {
        return make_error<PromptTemplate>(Errc::precondition, "slot counts must be >= 0");
    }

    std::vector<const ForwardResult*> correct;
    std::vector<const ForwardResult*> incorrect;
    for (const auto& r : results) (r.correct ? correct : incorrect).push_back(&r);

    Rng rng(seed);
    auto pick = [&rng](const std::vector<const ForwardResult*>& pool, int want,
                       std::string_view kind, Warnings* sink) {
        std::vector<const ForwardResult*> chosen;
        const std::size_t take = std::min<std::size_t>(pool.size(), static_cast<std::size_t>(want));
        if (take < static_cast<std::size_t>(want)) {
            warn(sink, "backward_pass",
                 "only " + std::to_string(pool.size()) + " of " + std::to_string(want) + " " +
                     std::string(kind) + " results available");
        }
        auto indices = sample_without_replacement(pool.size(), take, rng);
        std::sort(indices.begin(), indices.end());  // keep original result order
        for (auto idx : indices) chosen.push_back(pool[idx]);
        return chosen;
    };
    auto chosen_correct = pick(correct, n_correct, "correct", warnings);
    auto chosen_incorrect = pick(incorrect, n_incorrect, "incorrect", warnings);

    PromptTemplate next = tpl;
    next.version = tpl.version + 1;
    next.example_slots.clear();
    // Correct predictions become examples as-is; incorrect ones are written
    // with their true labels so the slot teaches the correction.
    for (const auto* r : chosen_correct) next.example_slots.emplace_back(r->input, r->label);
    for (const auto* r : chosen_incorrect) next.example_slots.emplace_back(r->input, r->label);
    return next;
}

namespace {

double accuracy_of(const std::vector<ForwardResult>& results) {
    if (results.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& r : results) hits += r.correct ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(results.size());
}

}  // namespace

Result<TuneResult> tune(const PromptTemplate& tpl0, const std::vector<LabeledSample>& train,
                        const std::vector<LabeledSample>& val, int iters, const TuneConfig& cfg,
                        TextGenerator& generator, Warnings* warnings, const CallCtx& ctx) {
    if (iters < 1) {
        return make_error<TuneResult>(Errc::precondition, "tune needs iters >= 1");
    }
    if (train.empty() || val.empty()) {
        return make_error<TuneResult>(Errc::precondition, "train and val must be non-empty");
    }
    for (const auto& t : train) {
        for (const auto& v : val) {
            if (t.first == v.first) {
                return make_error<TuneResult>(Errc::precondition,
                                              "train and val share input: " + t.first);
            }
        }
    }

    TuneResult result;
    result.best = tpl0;
    auto abort_with = [&result](const Error& e) {
        result.aborted = true;
        result.abort_error = e;
        result.report.iterations =
            std::max<int>(0, static_cast<int>(result.report.val_scores.size()) - 1);
        return result;
    };

    auto baseline = forward_pass(tpl0, val, generator, ctx);
    if (!baseline.ok()) return abort_with(baseline.error());
    result.report.val_scores.push_back(accuracy_of(baseline.value()));
    result.report.best_version = 0;
    double best_score = result.report.val_scores[0];

    Rng seeder(cfg.seed);
    PromptTemplate current = tpl0;
    for (int iter = 1; iter <= iters; ++iter) {
        auto train_results = forward_pass(current, train, generator, ctx);
        if (!train_results.ok()) return abort_with(train_results.error());

        auto refined = backward_pass(current, train_results.value(), cfg.n_correct,
                                     cfg.n_incorrect, seeder.next_u64(), warnings);
        if (!refined.ok()) return abort_with(refined.error());
        current = refined.take();

        auto val_results = forward_pass(current, val, generator, ctx);
        if (!val_results.ok()) return abort_with(val_results.error());
        const double score = accuracy_of(val_results.value());
        result.report.val_scores.push_back(score);
        if (score > best_score) {  // strict: ties keep the earlier version
            best_score = score;
            result.report.best_version = current.version;
            result.best = current;
        }
    }
    result.report.iterations = iters;
    return result;
}

Result<void> save_template(const PromptTemplate& tpl, const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        return make_error<void>(Errc::io_error, "cannot create " + dir + ": " + ec.message());
    }
    const std::string stem =
        dir + "/" + tpl.template_id + ".v" + std::to_string(tpl.version);
    {
        std::ofstream txt(stem + ".txt", std::ios::binary);
        if (!txt) return make_error<void>(Errc::io_error, "cannot write " + stem + ".txt");
        txt << render_template_body(tpl);
    }
    {
        std::ofstream sidecar(stem + ".json", std::ios::binary);
        if (!sidecar) return make_error<void>(Errc::io_error, "cannot write " + stem + ".json");
        sidecar << to_json(tpl).dump(2) << "\n";
    }
    return {};
}

Result<PromptTemplate> load_template(const std::string& dir, const std::string& template_id,
                                     int version) {
    const std::string path = dir + "/" + template_id + ".v" + std::to_string(version) + ".json";
    std::ifstream in(path, std::ios::binary);
    if (!in) return make_error<PromptTemplate>(Errc::io_error, "cannot read " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    auto parsed = parse_json(buffer.str());
    if (!parsed.ok()) return parsed.error();
    return prompt_template_from_json(parsed.value());
}

}  // namespace cuem
