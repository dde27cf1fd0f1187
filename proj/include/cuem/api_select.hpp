#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cuem/backends.hpp"
#include "cuem/result.hpp"
#include "cuem/templates.hpp"
#include "cuem/types.hpp"

namespace cuem {

/// Maps api_id to the connector that serves it. Immutable after setup, so
/// concurrent dispatch needs no locking.
class ConnectorRegistry {
public:
    void add(std::string api_id, std::shared_ptr<ApiConnector> connector);
    ApiConnector* find(const std::string& api_id) const;
    std::vector<std::string> ids() const;

private:
    std::map<std::string, std::shared_ptr<ApiConnector>> by_id_;
};

/// Stage 4a: renders the finder prompt (which ends with the forced prefix
/// {"need_api":) and asks the scorer for the likelihood of the positive token
/// "true". Scorer failure degrades to likelihood 0 with a warning: the API is
/// not selected but the pipeline continues.
ApiDecision score_api(const ApiDescriptor& api, const RefinedIntention& refined,
                      const MultimodalQuery& query, const PipelineConfig& cfg, TokenScorer& scorer,
                      const TemplateSet& templates, Warnings* warnings = nullptr,
                      const CallCtx& ctx = {});

/// Scores every API concurrently and joins the decisions into a deterministic
/// order: likelihood descending, api_id ascending. Completion order never
/// affects the output.
Result<std::vector<ApiDecision>> select_apis(const std::vector<ApiDescriptor>& apis,
                                             const RefinedIntention& refined,
                                             const MultimodalQuery& query,
                                             const PipelineConfig& cfg, TokenScorer& scorer,
                                             const TemplateSet& templates,
                                             Warnings* warnings = nullptr, const CallCtx& ctx = {});

/// Stage 4b: calls the connector registered for a selected decision with the
/// refined search query. Connector failure degrades to an empty result with a
/// warning; an unregistered api_id is an error.
Result<std::vector<Document>> dispatch(const ApiDecision& decision,
                                       const RefinedIntention& refined,
                                       const ConnectorRegistry& registry,
                                       Warnings* warnings = nullptr, const CallCtx& ctx = {});

}  // namespace cuem
