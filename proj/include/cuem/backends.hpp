#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cuem/result.hpp"
#include "cuem/types.hpp"

namespace cuem {

// ---------------------------------------------------------------------------
// Abstract interfaces for every external capability the pipeline consumes.
// Implementations must be safe for concurrent invocation; the deterministic
// mocks in mocks.hpp keep all state immutable after construction.
// ---------------------------------------------------------------------------

enum class BackendKind {
    text_generator,
    multimodal_describer,
    token_scorer,
    embedder,
    nli_scorer,
    text_search,
    similar_image_search,
    text_safety_classifier,
    image_safety_classifier,
    api_connector,
    judge,
};

inline constexpr std::size_t kBackendKindCount = 11;

const char* backend_kind_name(BackendKind k);

/// Thread-safe per-kind call counter. Stages snapshot it before/after to
/// attribute call budgets, and safety tests assert short-circuit behavior
/// through it.
class CallLedger {
public:
    void record(BackendKind kind) {
        counts_[static_cast<std::size_t>(kind)].fetch_add(1, std::memory_order_relaxed);
    }
    std::int64_t count(BackendKind kind) const {
        return counts_[static_cast<std::size_t>(kind)].load(std::memory_order_relaxed);
    }
    std::int64_t total() const {
        std::int64_t sum = 0;
        for (const auto& c : counts_) sum += c.load(std::memory_order_relaxed);
        return sum;
    }
    std::array<std::int64_t, kBackendKindCount> snapshot() const {
        std::array<std::int64_t, kBackendKindCount> out{};
        for (std::size_t i = 0; i < kBackendKindCount; ++i) {
            out[i] = counts_[i].load(std::memory_order_relaxed);
        }
        return out;
    }
    void reset() {
        for (auto& c : counts_) c.store(0, std::memory_order_relaxed);
    }

private:
    std::array<std::atomic<std::int64_t>, kBackendKindCount> counts_{};
};

/// Optional wall-clock budget. Every backend checks it on entry and returns
/// BackendUnavailable once expired, so the pipeline degrades per stage
/// instead of hanging.
struct Deadline {
    std::optional<std::chrono::steady_clock::time_point> at;

    static Deadline none() { return {}; }
    static Deadline in(std::chrono::milliseconds budget) {
        return Deadline{std::chrono::steady_clock::now() + budget};
    }
    bool expired() const { return at.has_value() && std::chrono::steady_clock::now() >= *at; }
};

/// Per-call context threaded through every backend invocation: the deadline
/// plus the ledger that the call is recorded against (per-request, so
/// concurrent requests never pollute each other's counts).
struct CallCtx {
    Deadline deadline{};
    CallLedger* ledger = nullptr;

    void record(BackendKind kind) const {
        if (ledger != nullptr) ledger->record(kind);
    }
};

struct DecodingParams {
    double temperature = 0.0;
    int max_tokens = 512;
    std::uint64_t seed = 0;
};

// --- Embedding ---------------------------------------------------------------

struct Embedding {
    std::vector<double> values;

    std::size_t dim() const { return values.size(); }
};

/// Cosine similarity. Identical value vectors short-circuit to exactly 1.0 so
/// byte-identical inputs always clear any threshold <= 1.
Result<double> cosine(const Embedding& a, const Embedding& b);

double l2_norm(const Embedding& e);

// --- Interfaces ---------------------------------------------------------------

class TextGenerator {
public:
    virtual ~TextGenerator() = default;
    virtual Result<std::string> generate(const std::string& prompt, const DecodingParams& params,
                                         const CallCtx& ctx = {}) = 0;
    /// Identifier recorded in answers (e.g. "scripted-v1").
    virtual std::string model_id() const = 0;
};

class MultimodalDescriber {
public:
    virtual ~MultimodalDescriber() = default;
    virtual Result<std::string> describe_image(const ImageRef& image, const CallCtx& ctx = {}) = 0;
};

class TokenScorer {
public:
    virtual ~TokenScorer() = default;
    virtual Result<double> positive_likelihood(const std::string& prompt,
                                               const std::string& positive_token,
                                               const CallCtx& ctx = {}) = 0;
};

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual Result<Embedding> embed(const std::string& text, const CallCtx& ctx = {}) = 0;
};

/// Sentence-pair scorer shape shared by the entailment backend (training-set
/// thresholds) and the relevance cross-encoder (top-k curation). The two are
/// distinct deployments of the same interface.
class PairScorer {
public:
    virtual ~PairScorer() = default;
    virtual Result<double> score_pair(const std::string& premise, const std::string& hypothesis,
                                      const CallCtx& ctx = {}) = 0;
};

class TextSearch {
public:
    virtual ~TextSearch() = default;
    virtual Result<std::vector<Document>> text_search(const std::string& query, int k,
                                                      const std::optional<std::string>& domain_filter,
                                                      const CallCtx& ctx = {}) = 0;
};

class SimilarImageSearch {
public:
    virtual ~SimilarImageSearch() = default;
    virtual Result<std::vector<ScoredDocument>> similar_image_search(const ImageRef& image, int k,
                                                                     const CallCtx& ctx = {}) = 0;
};

/// Prefilter classifier output. `recognized` is false when the input was not
/// in the classifier's universe (e.g. unknown image digest); callers treat
/// that as allow-with-warning.
struct SafetySignal {
    bool unsafe = false;
    double score = 0.0;
    bool recognized = true;
};

class TextSafetyClassifier {
public:
    virtual ~TextSafetyClassifier() = default;
    virtual Result<SafetySignal> classify_text_safety(const std::string& text,
                                                      const CallCtx& ctx = {}) = 0;
};

class ImageSafetyClassifier {
public:
    virtual ~ImageSafetyClassifier() = default;
    virtual Result<SafetySignal> classify_image_safety(const ImageRef& image,
                                                       const CallCtx& ctx = {}) = 0;
};

class ApiConnector {
public:
    virtual ~ApiConnector() = default;
    virtual Result<std::vector<Document>> call(const std::string& search_query,
                                               const CallCtx& ctx = {}) = 0;
};

/// Pairwise answer judge. Returns raw text whose first token is expected to
/// be A (first presented wins), B (second wins) or TIE.
class Judge {
public:
    virtual ~Judge() = default;
    virtual Result<std::string> compare(const std::string& query, const std::string& first,
                                        const std::string& second, const std::string& reference,
                                        const CallCtx& ctx = {}) = 0;
};

/// Bundle of every backend one pipeline instance runs against.
struct Backends {
    std::shared_ptr<TextGenerator> generator;
    std::shared_ptr<MultimodalDescriber> describer;
    std::shared_ptr<TokenScorer> scorer;
    std::shared_ptr<Embedder> embedder;
    std::shared_ptr<PairScorer> nli;        // entailment scoring (dataset thresholds)
    std::shared_ptr<PairScorer> relevance;  // cross-encoder relevance scoring
    std::shared_ptr<TextSearch> search;
    std::shared_ptr<SimilarImageSearch> image_search;
    std::shared_ptr<TextSafetyClassifier> text_safety;
    std::shared_ptr<ImageSafetyClassifier> image_safety;
    std::shared_ptr<Judge> judge;
};

}  // namespace cuem
