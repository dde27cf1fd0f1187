#pragma once

#include <map>
#include <string>
#include <vector>

#include "cuem/backends.hpp"
#include "cuem/bm25.hpp"

namespace cuem {

// ---------------------------------------------------------------------------
// Deterministic mock backends. Every mock is pure: state is immutable after
// construction, so identical inputs always produce byte-identical outputs and
// concurrent use needs no locking. Each one records its calls on the
// per-request ledger and honors deadlines like a real backend would.
// ---------------------------------------------------------------------------

/// Generator scripted by a fixture table. An entry fires when every one of
/// its match substrings occurs in the prompt; the entry with the greatest
/// total matched length wins (most specific script), ties broken by id
/// ascending. No entry firing yields the configured default output.
class ScriptedGenerator : public TextGenerator {
public:
    struct Entry {
        std::string id;
        std::vector<std::string> match;
        std::string output;
    };

    explicit ScriptedGenerator(std::vector<Entry> entries, std::string default_output = "UNKNOWN",
                               std::string model_id = "scripted-v1", bool unavailable = false);

    Result<std::string> generate(const std::string& prompt, const DecodingParams& params,
                                 const CallCtx& ctx) override;
    std::string model_id() const override { return model_id_; }

private:
    std::vector<Entry> entries_;
    std::string default_output_;
    std::string model_id_;
    bool unavailable_;
};

/// Generator simulating in-context learning over "Input:/Label:" prompts
/// (the layout the prompt-tuning module renders). It answers from its gold
/// table when some example slot in the prompt shares its first token with the
/// queried input — i.e. the prompt has "taught" that input family — and
/// otherwise answers the miss output. Accuracy under this mock is exactly the
/// fraction of queried inputs whose first token appears among the slots.
class SlotLookupGenerator : public TextGenerator {
public:
    explicit SlotLookupGenerator(std::map<std::string, std::string> gold,
                                 std::string miss_output = "I do not know",
                                 bool unavailable = false);

    Result<std::string> generate(const std::string& prompt, const DecodingParams& params,
                                 const CallCtx& ctx) override;
    std::string model_id() const override { return "slot-lookup-v1"; }

private:
    std::map<std::string, std::string> gold_;  // input text -> true label
    std::string miss_output_;
    bool unavailable_;
};

/// Caption table keyed by image content digest.
class MockDescriber : public MultimodalDescriber {
public:
    explicit MockDescriber(std::map<std::string, std::string> captions_by_digest,
                           bool unavailable = false);

    Result<std::string> describe_image(const ImageRef& image, const CallCtx& ctx) override;

private:
    std::map<std::string, std::string> captions_;
    bool unavailable_;
};

/// Likelihood = (trigger hits) / (lexicon size) for the API the prompt is
/// about. The prompt names the API by id (the selection template embeds it);
/// the earliest-appearing registered id wins when several occur.
class MockTokenScorer : public TokenScorer {
public:
    explicit MockTokenScorer(std::map<std::string, std::vector<std::string>> lexicons,
                             bool unavailable = false);

    Result<double> positive_likelihood(const std::string& prompt, const std::string& positive_token,
                                       const CallCtx& ctx) override;

private:
    std::map<std::string, std::vector<std::string>> lexicons_;  // api_id -> triggers
    bool unavailable_;
};

/// Seeded hash-feature embedder: every token adds ±1 to one of `dim` buckets,
/// then the vector is L2-normalized. Deterministic per (text, seed, dim).
class HashEmbedder : public Embedder {
public:
    explicit HashEmbedder(std::size_t dim = 64, std::uint64_t seed = 0x5eed,
                          bool unavailable = false);

    Result<Embedding> embed(const std::string& text, const CallCtx& ctx) override;

private:
    std::size_t dim_;
    std::uint64_t seed_;
    bool unavailable_;
};

/// Entailment mock: token-set Jaccard of premise vs hypothesis (symmetric).
class JaccardNli : public PairScorer {
public:
    explicit JaccardNli(bool unavailable = false) : unavailable_(unavailable) {}

    Result<double> score_pair(const std::string& premise, const std::string& hypothesis,
                              const CallCtx& ctx) override;

private:
    bool unavailable_;
};

/// Relevance mock: |premise-tokens ∩ hypothesis-tokens| / |premise-tokens|
/// with the query as premise — asymmetric containment, 1.0 when every query
/// token occurs in the document.
class OverlapRelevance : public PairScorer {
public:
    explicit OverlapRelevance(bool unavailable = false) : unavailable_(unavailable) {}

    Result<double> score_pair(const std::string& premise, const std::string& hypothesis,
                              const CallCtx& ctx) override;

private:
    bool unavailable_;
};

/// BM25 search over a fixture corpus; optional domain filter keeps only
/// documents whose url contains the filter string (case-insensitive).
class FixtureTextSearch : public TextSearch {
public:
    explicit FixtureTextSearch(std::vector<Document> corpus, bool unavailable = false);

    Result<std::vector<Document>> text_search(const std::string& query, int k,
                                              const std::optional<std::string>& domain_filter,
                                              const CallCtx& ctx) override;

private:
    Bm25Index index_;
    std::size_t corpus_size_;
    bool unavailable_;
};

/// Scripted neighbor lists keyed by image content digest; lists are stored
/// pre-sorted by (similarity desc, doc id asc).
class MockSimilarImageSearch : public SimilarImageSearch {
public:
    explicit MockSimilarImageSearch(std::map<std::string, std::vector<ScoredDocument>> by_digest,
                                    bool unavailable = false);

    Result<std::vector<ScoredDocument>> similar_image_search(const ImageRef& image, int k,
                                                             const CallCtx& ctx) override;

private:
    std::map<std::string, std::vector<ScoredDocument>> neighbors_;
    bool unavailable_;
};

/// Case-insensitive blocklist term matcher.
class BlocklistTextSafety : public TextSafetyClassifier {
public:
    explicit BlocklistTextSafety(std::vector<std::string> blocklist, bool unavailable = false);

    Result<SafetySignal> classify_text_safety(const std::string& text, const CallCtx& ctx) override;

private:
    std::vector<std::string> blocklist_;  // stored lowercased
    bool unavailable_;
};

/// Digest-keyed image verdicts; digests absent from the table come back with
/// recognized=false so the caller can allow-with-warning.
class DigestImageSafety : public ImageSafetyClassifier {
public:
    explicit DigestImageSafety(std::map<std::string, bool> flagged_by_digest,
                               bool unavailable = false);

    Result<SafetySignal> classify_image_safety(const ImageRef& image, const CallCtx& ctx) override;

private:
    std::map<std::string, bool> flagged_;
    bool unavailable_;
};

/// Connector over a fixed catalog: returns catalog documents sharing at least
/// one token with the search query, scored by overlap count, with source
/// forced to the connector's category.
class MockApiConnector : public ApiConnector {
public:
    MockApiConnector(std::string api_id, DocSource category, std::vector<Document> catalog,
                     bool unavailable = false);

    Result<std::vector<Document>> call(const std::string& search_query, const CallCtx& ctx) override;

private:
    std::string api_id_;
    DocSource category_;
    std::vector<Document> catalog_;
    bool unavailable_;
};

/// Judge that always prefers whichever answer was presented first — the
/// positional-bias worst case the order swap must cancel.
class FirstPresentedJudge : public Judge {
public:
    Result<std::string> compare(const std::string& query, const std::string& first,
                                const std::string& second, const std::string& reference,
                                const CallCtx& ctx) override;
};

/// Judge preferring the longer answer; equal lengths tie.
class LengthPreferringJudge : public Judge {
public:
    Result<std::string> compare(const std::string& query, const std::string& first,
                                const std::string& second, const std::string& reference,
                                const CallCtx& ctx) override;
};

/// Judge preferring the answer with greater token overlap against the
/// reference; equal overlap ties. Order-consistent: swapping presentation
/// swaps the verdict.
class ReferenceOverlapJudge : public Judge {
public:
    Result<std::string> compare(const std::string& query, const std::string& first,
                                const std::string& second, const std::string& reference,
                                const CallCtx& ctx) override;
};

}  // namespace cuem
