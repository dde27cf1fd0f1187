#include "cuem/api_select.hpp"

#include <algorithm>
#include <future>

namespace cuem {

namespace {

const char* kFinderSystem =
    "You decide whether answering the user requires calling the specialized API described "
    "below. Reply with JSON.";

const char* kPositiveToken = "true";

std::string describe_api(const ApiDescriptor& api) {
    return api.id + " (" + api.name + "): " + api.description;
}

}  // namespace

void ConnectorRegistry::add(std::string api_id, std::shared_ptr<ApiConnector> connector) {
    by_id_[std::move(api_id)] = std::move(connector);
}

ApiConnector* ConnectorRegistry::find(const std::string& api_id) const {
    auto it = by_id_.find(api_id);
    return it == by_id_.end() ? nullptr : it->second.get();
}

std::vector<std::string> ConnectorRegistry::ids() const {
    std::vector<std::string> out;
    out.reserve(by_id_.size());
    for (const auto& [id, _] : by_id_) out.push_back(id);
    return out;
}

ApiDecision score_api(const ApiDescriptor& api, const RefinedIntention& refined,
                      const MultimodalQuery& query, const PipelineConfig& cfg, TokenScorer& scorer,
                      const TemplateSet& templates, Warnings* warnings, const CallCtx& ctx) {
    ApiDecision decision;
    decision.api_id = api.id;

    auto prompt = render_template(templates.api_finder,
                                  {{"system_prompt", kFinderSystem},
                                   {"api_description", describe_api(api)},
                                   {"api_examples", "(none)"},
                                   {"previous_chat", render_history(query.history)},
                                   {"usre_query", query.text.empty() ? "(image only)" : query.text},
                                   {"refined_information", refined.intent_text}});
    if (!prompt.ok()) {
        warn(warnings, "api_selection", api.id + ": " + prompt.error().message);
        return decision;  // likelihood 0, not selected
    }

    auto likelihood = scorer.positive_likelihood(prompt.value(), kPositiveToken, ctx);
    if (!likelihood.ok()) {
        warn(warnings, "api_selection", api.id + ": " + likelihood.error().message);
        return decision;
    }
    decision.positive_likelihood = likelihood.value();
    decision.selected = decision.positive_likelihood >= cfg.api_threshold;
    return decision;
}

Result<std::vector<ApiDecision>> select_apis(const std::vector<ApiDescriptor>& apis,
                                             const RefinedIntention& refined,
                                             const MultimodalQuery& query,
                                             const PipelineConfig& cfg, TokenScorer& scorer,
                                             const TemplateSet& templates, Warnings* warnings,
                                             const CallCtx& ctx) {
    if (apis.empty()) {
        return make_error<std::vector<ApiDecision>>(Errc::precondition,
                                                    "select_apis needs at least one API");
    }

    // Fan out one scoring task per API; each gets a private warning sink so
    // concurrent writes can't race. Warnings merge back in input order.
    std::vector<Warnings> local_warnings(apis.size());
    std::vector<std::future<ApiDecision>> futures;
    futures.reserve(apis.size());
    for (std::size_t i = 0; i < apis.size(); ++i) {
        futures.push_back(std::async(std::launch::async, [&, i] {
            return score_api(apis[i], refined, query, cfg, scorer, templates, &local_warnings[i],
                             ctx);
        }));
    }

    std::vector<ApiDecision> decisions;
    decisions.reserve(apis.size());
    for (auto& fut : futures) decisions.push_back(fut.get());
    if (warnings) {
        for (const auto& batch : local_warnings) {
            warnings->insert(warnings->end(), batch.begin(), batch.end());
        }
    }

    std::sort(decisions.begin(), decisions.end(), decision_before);
    return decisions;
}

Result<std::vector<Document>> dispatch(const ApiDecision& decision,
                                       const RefinedIntention& refined,
                                       const ConnectorRegistry& registry, Warnings* warnings,
                                       const CallCtx& ctx) {
    if (!decision.selected) {
        return make_error<std::vector<Document>>(Errc::precondition,
                                                 "dispatch requires a selected decision");
    }
    ApiConnector* connector = registry.find(decision.api_id);
    if (connector == nullptr) {
        return make_error<std::vector<Document>>(Errc::unknown_api,
                                                 "no connector registered for " + decision.api_id);
    }
    auto docs = connector->call(refined.search_query, ctx);
    if (!docs.ok()) {
        warn(warnings, "dispatch", decision.api_id + ": " + docs.error().message);
        return std::vector<Document>{};
    }
    return docs.take();
}

}  // namespace cuem
