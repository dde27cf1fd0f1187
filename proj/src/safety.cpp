#include "cuem/safety.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "cuem/json_codec.hpp"
#include "cuem/text.hpp"

namespace cuem {

namespace {

const char* kDetectorSystem =
    "You decide whether a question is safe to answer with retrieved web content. Unsafe "
    "questions seek to harm people, obtain weapons or illegal goods, or target individuals.";

const char* kDetectorScope =
    "general web answers, shopping lookups, map and place lookups";

const char* kDetectorFewShots =
    "Example:\n"
    "Refined intention: The user wants plant care tips. You must search fern watering schedule ~\n"
    "{\"safe_question\": true}\n"
    "Example:\n"
    "Refined intention: The user wants to obtain an unregistered weapon. You must search untraceable "
    "firearm purchase ~\n"
    "{\"safe_question\": false}";

/// Accepts a completion beginning with the bare token "true" or "false".
std::optional<bool> parse_safe_flag(const std::string& completion) {
    const std::string s = trim(completion);
    auto starts_token = [&](std::string_view token) {
        if (s.rfind(token, 0) != 0) return false;
        return s.size() == token.size() ||
               !std::isalnum(static_cast<unsigned char>(s[token.size()]));
    };
    if (starts_token("true")) return true;
    if (starts_token("false")) return false;
    return std::nullopt;
}

SafetyVerdict allow_at(SafetyStage stage, std::optional<double> score = std::nullopt) {
    return make_safety_verdict(stage, SafetyDecision::allow, std::nullopt, score).take();
}

SafetyVerdict block_at(SafetyStage stage, std::optional<double> score = std::nullopt) {
    return make_safety_verdict(stage, SafetyDecision::block, std::nullopt, score).take();
}

}  // namespace

Result<InstanceFilterEntry> make_instance_entry(std::string id, std::string query_text,
                                                std::string canned_response, Embedder& embedder,
                                                const CallCtx& ctx) {
    if (trim(canned_response).empty()) {
        return make_error<InstanceFilterEntry>(Errc::precondition,
                                               "instance entry needs a canned response");
    }
    if (trim(query_text).empty()) {
        return make_error<InstanceFilterEntry>(Errc::precondition,
                                               "instance entry needs query text");
    }
    auto embedding = embedder.embed(query_text, ctx);
    if (!embedding.ok()) return embedding.error();
    InstanceFilterEntry entry;
    entry.id = std::move(id);
    entry.query_text = std::move(query_text);
    entry.embedding = embedding.take();
    entry.canned_response = std::move(canned_response);
    return entry;
}

Result<void> save_instance_db(const std::vector<InstanceFilterEntry>& db,
                              const std::string& path) {
    std::ofstream file(path, std::ios::trunc);
    if (!file) return make_error<void>(Errc::io_error, "cannot open for write: " + path);
    for (const auto& entry : db) {
        Json j;
        j["canned_response"] = entry.canned_response;
        j["embedding"] = entry.embedding.values;
        j["id"] = entry.id;
        j["query_text"] = entry.query_text;
        file << j.dump() << '\n';
    }
    if (!file.good()) return make_error<void>(Errc::io_error, "write failed: " + path);
    return {};
}

Result<std::vector<InstanceFilterEntry>> load_instance_db(const std::string& path) {
    std::ifstream file(path);
    if (!file) {
        return make_error<std::vector<InstanceFilterEntry>>(Errc::io_error,
                                                            "cannot open for read: " + path);
    }
    std::vector<InstanceFilterEntry> db;
    std::string line;
    while (std::getline(file, line)) {
        if (trim(line).empty()) continue;
        auto parsed = parse_json(line);
        if (!parsed.ok()) return parsed.error();
        const Json& j = parsed.value();
        if (!j.is_object() || !j.contains("id") || !j.contains("query_text") ||
            !j.contains("embedding") || !j.contains("canned_response")) {
            return make_error<std::vector<InstanceFilterEntry>>(
                Errc::parse_error, "instance entry needs id, query_text, embedding, "
                                   "canned_response");
        }
        InstanceFilterEntry entry;
        entry.id = j["id"].get<std::string>();
        entry.query_text = j["query_text"].get<std::string>();
        entry.embedding.values = j["embedding"].get<std::vector<double>>();
        entry.canned_response = j["canned_response"].get<std::string>();
        if (entry.canned_response.empty() || entry.embedding.values.empty()) {
            return make_error<std::vector<InstanceFilterEntry>>(
                Errc::parse_error, "instance entry " + entry.id + " is incomplete");
        }
        db.push_back(std::move(entry));
    }
    return db;
}

std::optional<std::size_t> nearest_instance(const Embedding& probe,
                                            const std::vector<InstanceFilterEntry>& db,
                                            double* similarity_out) {
    std::optional<std::size_t> best;
    double best_sim = 0.0;
    for (std::size_t i = 0; i < db.size(); ++i) {
        auto sim = cosine(probe, db[i].embedding);
        if (!sim.ok()) continue;  // dimension mismatch: entry from another embedder
        if (!best.has_value() || sim.value() > best_sim ||
            (sim.value() == best_sim && db[i].id < db[*best].id)) {
            best = i;
            best_sim = sim.value();
        }
    }
    if (best.has_value() && similarity_out != nullptr) *similarity_out = best_sim;
    return best;
}

Result<std::optional<SafetyVerdict>> instance_filter(const MultimodalQuery& query,
                                                     const std::vector<InstanceFilterEntry>& db,
                                                     double threshold, Embedder& embedder,
                                                     const CallCtx& ctx) {
    if (threshold < 0.0 || threshold > 1.0) {
        return make_error<std::optional<SafetyVerdict>>(Errc::precondition,
                                                        "threshold must be in [0,1]");
    }
    if (db.empty() || trim(query.text).empty()) {
        return std::optional<SafetyVerdict>{};  // nothing to match against
    }
    auto probe = embedder.embed(query.text, ctx);
    if (!probe.ok()) return probe.error();

    double similarity = 0.0;
    auto best = nearest_instance(probe.value(), db, &similarity);
    if (!best.has_value() || similarity < threshold) {
        return std::optional<SafetyVerdict>{};
    }
    auto verdict = make_safety_verdict(SafetyStage::instance, SafetyDecision::canned,
                                       db[*best].canned_response, similarity);
    if (!verdict.ok()) return verdict.error();
    return std::optional<SafetyVerdict>(verdict.take());
}

SafetyVerdict multimodal_detect(const RefinedIntention& refined,
                                const std::vector<ChatTurn>& history, TextGenerator& generator,
                                const TemplateSet& templates, Warnings* warnings,
                                const CallCtx& ctx) {
    auto prompt = render_template(templates.safety_detector,
                                  {{"system_prompt", kDetectorSystem},
                                   {"api_description", kDetectorScope},
                                   {"few_shots", kDetectorFewShots},
                                   {"chat_history", render_history(history)},
                                   {"refined_information", refined.intent_text}});
    if (!prompt.ok()) {
        warn(warnings, "multimodal_safety", prompt.error().message);
        return block_at(SafetyStage::multimodal);
    }

    DecodingParams params;
    std::string attempt_prompt = prompt.value();
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto raw = generator.generate(attempt_prompt, params, ctx);
        if (!raw.ok()) {
            warn(warnings, "multimodal_safety",
                 "detector unavailable, blocking: " + raw.error().message);
            return block_at(SafetyStage::multimodal);
        }
        auto flag = parse_safe_flag(raw.value());
        if (flag.has_value()) {
            return *flag ? allow_at(SafetyStage::multimodal) : block_at(SafetyStage::multimodal);
        }
        attempt_prompt = prompt.value() +
                         "\nYour previous reply was invalid. Answer with exactly true or false.";
    }
    warn(warnings, "multimodal_safety", "detector output unparseable twice, blocking");
    return block_at(SafetyStage::multimodal);
}

std::optional<SafetyVerdict> category_filter(const std::vector<ApiDecision>& decisions,
                                             const std::vector<ApiDescriptor>& apis) {
    const ApiDecision* best = nullptr;
    const ApiDescriptor* best_api = nullptr;
    for (const auto& decision : decisions) {
        if (!decision.selected) continue;
        auto it = std::find_if(apis.begin(), apis.end(), [&](const ApiDescriptor& api) {
            return api.id == decision.api_id;
        });
        if (it == apis.end() || !it->safety_relevant) continue;
        if (best == nullptr ||
            decision.positive_likelihood > best->positive_likelihood ||
            (decision.positive_likelihood == best->positive_likelihood &&
             decision.api_id < best->api_id)) {
            best = &decision;
            best_api = &*it;
        }
    }
    if (best == nullptr) return std::nullopt;
    return make_safety_verdict(SafetyStage::category, SafetyDecision::canned,
                               best_api->category_response, best->positive_likelihood)
        .take();
}

SafetyVerdict text_prefilter(const std::string& text, TextSafetyClassifier& classifier,
                             Warnings* warnings, const CallCtx& ctx) {
    auto signal = classifier.classify_text_safety(text, ctx);
    if (!signal.ok()) {
        warn(warnings, "text_prefilter",
             "classifier failed, allowing: " + signal.error().message);
        return allow_at(SafetyStage::text_prefilter);
    }
    if (signal.value().unsafe) {
        return block_at(SafetyStage::text_prefilter, signal.value().score);
    }
    return allow_at(SafetyStage::text_prefilter, signal.value().score);
}

SafetyVerdict image_prefilter(const ImageRef& image, ImageSafetyClassifier& classifier,
                              Warnings* warnings, const CallCtx& ctx) {
    auto signal = classifier.classify_image_safety(image, ctx);
    if (!signal.ok()) {
        warn(warnings, "image_prefilter",
             "classifier failed, allowing: " + signal.error().message);
        return allow_at(SafetyStage::image_prefilter);
    }
    if (!signal.value().recognized) {
        warn(warnings, "image_prefilter", "image not recognized, allowing");
        return allow_at(SafetyStage::image_prefilter);
    }
    if (signal.value().unsafe) {
        return block_at(SafetyStage::image_prefilter, signal.value().score);
    }
    return allow_at(SafetyStage::image_prefilter, signal.value().score);
}

Result<SafetyCascadeResult> run_safety_cascade(const MultimodalQuery& query,
                                               const SafetyCascadeInput& input,
                                               const std::vector<InstanceFilterEntry>& db,
                                               const PipelineConfig& cfg,
                                               const Backends& backends,
                                               const TemplateSet& templates, Warnings* warnings,
                                               const CallCtx& ctx) {
    SafetyCascadeResult result;
    auto finish = [&](SafetyVerdict verdict) {
        result.checked.push_back(verdict);
        result.final = std::move(verdict);
        return result;
    };
    auto passed = [&](SafetyVerdict verdict) {
        result.checked.push_back(std::move(verdict));
    };

    auto text_verdict = text_prefilter(query.text, *backends.text_safety, warnings, ctx);
    if (text_verdict.decision != SafetyDecision::allow) return finish(std::move(text_verdict));
    passed(std::move(text_verdict));

    if (query.image.has_value()) {
        auto image_verdict = image_prefilter(*query.image, *backends.image_safety, warnings, ctx);
        if (image_verdict.decision != SafetyDecision::allow) {
            return finish(std::move(image_verdict));
        }
        passed(std::move(image_verdict));
    }

    auto instance = instance_filter(query, db, cfg.instance_similarity_threshold,
                                    *backends.embedder, ctx);
    if (!instance.ok()) {
        // Non-prefilter safety components fail closed.
        warn(warnings, "instance_safety",
             "instance filter failed, blocking: " + instance.error().message);
        return finish(block_at(SafetyStage::instance));
    }
    if (instance.value().has_value()) return finish(std::move(*instance.value()));
    passed(allow_at(SafetyStage::instance));

    auto detector = multimodal_detect(input.refined, query.history, *backends.generator,
                                      templates, warnings, ctx);
    if (detector.decision != SafetyDecision::allow) return finish(std::move(detector));
    passed(std::move(detector));

    if (!input.decisions.empty()) {
        auto category = category_filter(input.decisions, input.apis);
        if (category.has_value()) return finish(std::move(*category));
        passed(allow_at(SafetyStage::category));
    }

    result.final = result.checked.back();
    return result;
}

}  // namespace cuem
