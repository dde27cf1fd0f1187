#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cuem/backends.hpp"
#include "cuem/json_codec.hpp"
#include "cuem/result.hpp"
#include "cuem/types.hpp"

namespace cuem {

/// A labeled example: task input and its expected label.
using LabeledSample = std::pair<std::string, std::string>;

/// A classification prompt under refinement. The fixed sections never change
/// across versions of one template_id; refinement only rewrites the mutable
/// parts and bumps the version.
struct PromptTemplate {
    std::string template_id;
    int version = 0;
    std::vector<std::string> fixed_sections;  // byte-immutable across versions
    std::string instruction_section;
    std::vector<LabeledSample> example_slots;  // in-context (input, label) pairs
};

Result<PromptTemplate> make_prompt_template(std::string template_id, int version,
                                            std::vector<std::string> fixed_sections,
                                            std::string instruction_section,
                                            std::vector<LabeledSample> example_slots = {});

/// The template body without a query: fixed sections, instruction, then each
/// example slot as an "Input:/Label:" block.
std::string render_template_body(const PromptTemplate& tpl);

/// The full prompt for one input: body plus a trailing "Input: <x>\nLabel:"
/// block for the generator to complete.
std::string render_prompt(const PromptTemplate& tpl, const std::string& input);

/// Label comparison form: lowercased, whitespace collapsed.
std::string normalize_label(const std::string& s);

struct ForwardResult {
    std::string input;
    std::string predicted;
    std::string label;
    bool correct = false;  // normalize_label(predicted) == normalize_label(label)
};

struct TuningReport {
    int iterations = 0;              // completed refinement iterations
    std::vector<double> val_scores;  // index = template version; [0] is the baseline
    int best_version = 0;            // max score, ties resolved to the lowest version
};

struct TuneConfig {
    int n_correct = 2;    // correct examples sampled into slots per backward pass
    int n_incorrect = 2;  // incorrect examples sampled (carrying their true labels)
    std::uint64_t seed = 0;
};

/// Outcome of a tuning run. A backend failure mid-run aborts: `best` and
/// `report` cover the versions that were scored before the failure.
struct TuneResult {
    PromptTemplate best;
    TuningReport report;
    bool aborted = false;
    std::optional<Error> abort_error;
};

Json to_json(const PromptTemplate& v);
Json to_json(const ForwardResult& v);
Json to_json(const TuningReport& v);
Result<PromptTemplate> prompt_template_from_json(const Json& j);
Result<TuningReport> tuning_report_from_json(const Json& j);

/// Predicts a label for every sample by completing the rendered prompt.
/// Samples fan out concurrently; results keep sample order. A generator
/// failure on any sample fails the whole pass (first failure in sample
/// order wins, for determinism).
Result<std::vector<ForwardResult>> forward_pass(const PromptTemplate& tpl,
                                                const std::vector<LabeledSample>& samples,
                                                TextGenerator& generator,
                                                const CallCtx& ctx = {});

/// Builds version+1 of the template: example_slots are replaced with a seeded
/// sample of up to n_correct correct and n_incorrect incorrect results, the
/// incorrect ones carrying their true labels as corrections. Under-supply
/// takes everything available with a warning. Fixed sections are copied
/// byte-for-byte.
Result<PromptTemplate> backward_pass(const PromptTemplate& tpl,
                                     const std::vector<ForwardResult>& results, int n_correct,
                                     int n_incorrect, std::uint64_t seed,
                                     Warnings* warnings = nullptr);

/// Iterates forward(train) -> backward -> score(val), keeping the version
/// with the best validation score (ties to the earliest). The report scores
/// every version including the baseline, so a completed run holds iters+1
/// entries. Backend failures abort the loop; the partial result is returned
/// with `aborted` set rather than thrown away.
Result<TuneResult> tune(const PromptTemplate& tpl0, const std::vector<LabeledSample>& train,
                        const std::vector<LabeledSample>& val, int iters, const TuneConfig& cfg,
                        TextGenerator& generator, Warnings* warnings = nullptr,
                        const CallCtx& ctx = {});

/// Persistence: <id>.v<version>.txt holds the rendered body for inspection,
/// <id>.v<version>.json is the authoritative sidecar load reads back.
Result<void> save_template(const PromptTemplate& tpl, const std::string& dir);
Result<PromptTemplate> load_template(const std::string& dir, const std::string& template_id,
                                     int version);

}  // namespace cuem
