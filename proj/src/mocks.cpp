#include "cuem/mocks.hpp"

#include <algorithm>
#include <set>

#include "cuem/text.hpp"

namespace cuem {

namespace {

template <typename T>
Result<T> unavailable(const char* what) {
    return make_error<T>(Errc::backend_unavailable, std::string(what) + " unavailable");
}

/// splitmix64-style finalizer over an FNV-1a hash, mixed with the seed.
std::uint64_t hash_token(const std::string& token, std::uint64_t seed) {
    std::uint64_t h = 1469598103934665603ull ^ seed;
    for (unsigned char c : token) {
        h ^= c;
        h *= 1099511628211ull;
    }
    h += 0x9e3779b97f4a7c15ull;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
    return h ^ (h >> 31);
}

/// First index at which `phrase` occurs as a consecutive run inside `tokens`,
/// or npos. Single-word phrases degrade to a linear membership scan.
std::size_t find_phrase(const std::vector<std::string>& tokens,
                        const std::vector<std::string>& phrase) {
    if (phrase.empty() || tokens.size() < phrase.size()) return std::string::npos;
    for (std::size_t i = 0; i + phrase.size() <= tokens.size(); ++i) {
        bool all = true;
        for (std::size_t j = 0; j < phrase.size(); ++j) {
            if (tokens[i + j] != phrase[j]) {
                all = false;
                break;
            }
        }
        if (all) return i;
    }
    return std::string::npos;
}

std::set<std::string> overlap_tokens(const std::string& text) {
    auto toks = tokenize(text);
    return {toks.begin(), toks.end()};
}

}  // namespace

// --- ScriptedGenerator -------------------------------------------------------

ScriptedGenerator::ScriptedGenerator(std::vector<Entry> entries, std::string default_output,
                                     std::string model_id, bool unavailable)
    : entries_(std::move(entries)),
      default_output_(std::move(default_output)),
      model_id_(std::move(model_id)),
      unavailable_(unavailable) {}

Result<std::string> ScriptedGenerator::generate(const std::string& prompt,
                                                const DecodingParams& params, const CallCtx& ctx) {
    (void)params;  // the script ignores decoding knobs; determinism is total
    ctx.record(BackendKind::text_generator);
    if (unavailable_ || ctx.deadline.expired()) return unavailable<std::string>("generator");
    if (prompt.empty()) {
        return make_error<std::string>(Errc::precondition, "generate needs a non-empty prompt");
    }

    const Entry* best = nullptr;
    std::size_t best_len = 0;
    for (const auto& e : entries_) {
        if (e.match.empty()) continue;
        std::size_t total = 0;
        bool all = true;
        for (const auto& m : e.match) {
            if (prompt.find(m) == std::string::npos) {
                all = false;
                break;
            }
            total += m.size();
        }
        if (!all) continue;
        if (best == nullptr || total > best_len || (total == best_len && e.id < best->id)) {
            best = &e;
            best_len = total;
        }
    }
    return best != nullptr ? best->output : default_output_;
}

// --- SlotLookupGenerator -------------------------------------------------------

SlotLookupGenerator::SlotLookupGenerator(std::map<std::string, std::string> gold,
                                         std::string miss_output, bool unavailable)
    : gold_(std::move(gold)), miss_output_(std::move(miss_output)), unavailable_(unavailable) {}

Result<std::string> SlotLookupGenerator::generate(const std::string& prompt,
                                                  const DecodingParams& params,
                                                  const CallCtx& ctx) {
    (void)params;
    ctx.record(BackendKind::text_generator);
    if (unavailable_ || ctx.deadline.expired()) return unavailable<std::string>("generator");
    if (prompt.empty()) {
        return make_error<std::string>(Errc::precondition, "generate needs a non-empty prompt");
    }

    // Parse "Input: X" lines; a following "Label: Y" line makes (X, Y) an
    // example slot, a bare "Label:" marks X as the queried input.
    std::set<std::string> taught;  // first tokens of example-slot inputs
    std::string queried;
    const auto lines = split_lines(prompt);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        constexpr std::string_view kInput = "Input: ";
        if (lines[i].rfind(kInput, 0) != 0) continue;
        const std::string input = trim(lines[i].substr(kInput.size()));
        const bool has_label = i + 1 < lines.size() && lines[i + 1].rfind("Label:", 0) == 0 &&
                               !trim(lines[i + 1].substr(6)).empty();
        const auto tokens = tokenize(input);
        if (has_label) {
            if (!tokens.empty()) taught.insert(tokens.front());
        } else {
            queried = input;
        }
    }

    if (queried.empty()) return miss_output_;
    const auto tokens = tokenize(queried);
    if (tokens.empty() || taught.count(tokens.front()) == 0) return miss_output_;
    const auto it = gold_.find(queried);
    return it != gold_.end() ? it->second : miss_output_;
}

// --- MockDescriber -----------------------------------------------------------

MockDescriber::MockDescriber(std::map<std::string, std::string> captions_by_digest,
                             bool unavailable)
    : captions_(std::move(captions_by_digest)), unavailable_(unavailable) {}

Result<std::string> MockDescriber::describe_image(const ImageRef& image, const CallCtx& ctx) {
    ctx.record(BackendKind::multimodal_describer);
    if (unavailable_ || ctx.deadline.expired()) return unavailable<std::string>("describer");
    auto it = captions_.find(image.content_digest);
    if (it == captions_.end()) {
        return make_error<std::string>(Errc::unknown_image,
                                       "no caption registered for image '" + image.id + "'");
    }
    return it->second;
}

// --- MockTokenScorer ---------------------------------------------------------

MockTokenScorer::MockTokenScorer(std::map<std::string, std::vector<std::string>> lexicons,
                                 bool unavailable)
    : lexicons_(std::move(lexicons)), unavailable_(unavailable) {}

Result<double> MockTokenScorer::positive_likelihood(const std::string& prompt,
                                                    const std::string& positive_token,
                                                    const CallCtx& ctx) {
    ctx.record(BackendKind::token_scorer);
    if (unavailable_ || ctx.deadline.expired()) return unavailable<double>("token scorer");
    if (positive_token.empty()) {
        return make_error<double>(Errc::precondition, "positive_token must be non-empty");
    }

    const auto tokens = tokenize(prompt);

    // The prompt identifies the API under scoring by its id; the selection
    // template renders the id before any user content, so the earliest
    // occurrence is the right one when several ids appear.
    const std::vector<std::string>* lexicon = nullptr;
    std::size_t best_pos = std::string::npos;
    std::size_t best_span = 0;
    std::string best_id;
    for (const auto& [api_id, lex] : lexicons_) {
        const auto id_tokens = tokenize(api_id);
        const std::size_t pos = find_phrase(tokens, id_tokens);
        if (pos == std::string::npos) continue;
        const bool better = pos < best_pos ||
                            (pos == best_pos && id_tokens.size() > best_span) ||
                            (pos == best_pos && id_tokens.size() == best_span && api_id < best_id);
        if (better) {
            best_pos = pos;
            best_span = id_tokens.size();
            best_id = api_id;
            lexicon = &lex;
        }
    }
    if (lexicon == nullptr || lexicon->empty()) return 0.0;

    std::size_t hits = 0;
    for (const auto& entry : *lexicon) {
        if (find_phrase(tokens, tokenize(entry)) != std::string::npos) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(lexicon->size());
}

// --- HashEmbedder ------------------------------------------------------------

HashEmbedder::HashEmbedder(std::size_t dim, std::uint64_t seed, bool unavailable)
    : dim_(dim), seed_(seed), unavailable_(unavailable) {}

Result<Embedding> HashEmbedder::embed(const std::string& text, const CallCtx& ctx) {
    ctx.record(BackendKind::embedder);
    if (unavailable_ || ctx.deadline.expired()) return unavailable<Embedding>("embedder");
    if (text.empty()) {
        return make_error<Embedding>(Errc::precondition, "embed needs non-empty text");
    }

    Embedding e;
    e.values.assign(dim_, 0.0);
    auto tokens = tokenize(text);
    if (tokens.empty()) tokens.push_back(text);  // punctuation-only input still embeds
    for (const auto& t : tokens) {
        const std::uint64_t h = hash_token(t, seed_);
        const auto bucket = static_cast<std::size_t>(h % dim_);
        e.values[bucket] += (h >> 63) != 0 ? 1.0 : -1.0;
    }
    if (l2_norm(e) == 0.0) {
        e.values[static_cast<std::size_t>(hash_token(text, seed_) % dim_)] = 1.0;
    }
    const double norm = l2_norm(e);
    for (auto& v : e.values) v /= norm;
    return e;
}

// --- PairScorers -------------------------------------------------------------

Result<double> JaccardNli::score_pair(const std::string& premise, const std::string& hypothesis,
                                      const CallCtx& ctx) {
    ctx.record(BackendKind::nli_scorer);
    if (unavailable_ || ctx.deadline.expired()) return unavailable<double>("nli scorer");
    if (premise.empty() || hypothesis.empty()) {
        return make_error<double>(Errc::precondition, "nli needs non-empty premise and hypothesis");
    }
    const auto a = overlap_tokens(premise);
    const auto b = overlap_tokens(hypothesis);
    if (a.empty() || b.empty()) return 0.0;
    std::size_t inter = 0;
    for (const auto& t : a) inter += b.count(t);
    const std::size_t uni = a.size() + b.size() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Result<double> OverlapRelevance::score_pair(const std::string& premise,
                                            const std::string& hypothesis, const CallCtx& ctx) {
    ctx.record(BackendKind::nli_scorer);
    if (unavailable_ || ctx.deadline.expired()) return unavailable<double>("relevance scorer");
    if (premise.empty()) {
        return make_error<double>(Errc::precondition, "relevance needs a non-empty query");
    }
    const auto q = overlap_tokens(premise);
    if (q.empty()) return 0.0;
    const auto d = overlap_tokens(hypothesis);
    std::size_t inter = 0;
    for (const auto& t : q) inter += d.count(t);
    return static_cast<double>(inter) / static_cast<double>(q.size());
}

// --- FixtureTextSearch -------------------------------------------------------

FixtureTextSearch::FixtureTextSearch(std::vector<Document> corpus, bool unavailable)
    : index_(std::move(corpus)), corpus_size_(index_.size()), unavailable_(unavailable) {}

Result<std::vector<Document>> FixtureTextSearch::text_search(
    const std::string& query, int k, const std::optional<std::string>& domain_filter,
    const CallCtx& ctx) {
    ctx.record(BackendKind::text_search);
    if (unavailable_ || ctx.deadline.expired()) {
        return unavailable<std::vector<Document>>("text search");
    }
    if (k < 1) {
        return make_error<std::vector<Document>>(Errc::precondition, "text_search needs k >= 1");
    }

    // Retrieve over the whole corpus first so a domain filter never starves
    // the result of otherwise-eligible documents.
    auto hits = index_.search(query, static_cast<int>(corpus_size_));
    if (domain_filter.has_value() && !domain_filter->empty()) {
        std::erase_if(hits, [&](const Document& d) {
            return !d.url.has_value() || !contains_ci(*d.url, *domain_filter);
        });
    }
    if (hits.size() > static_cast<std::size_t>(k)) hits.resize(static_cast<std::size_t>(k));
    return hits;
}

// --- MockSimilarImageSearch ----------------------------------------------------

MockSimilarImageSearch::MockSimilarImageSearch(
    std::map<std::string, std::vector<ScoredDocument>> by_digest, bool unavailable)
    : neighbors_(std::move(by_digest)), unavailable_(unavailable) {
    for (auto& [_, list] : neighbors_) {
        std::sort(list.begin(), list.end(), [](const ScoredDocument& a, const ScoredDocument& b) {
            if (a.similarity != b.similarity) return a.similarity > b.similarity;
            return a.doc.id < b.doc.id;
        });
    }
}

Result<std::vector<ScoredDocument>> MockSimilarImageSearch::similar_image_search(
    const ImageRef& image, int k, const CallCtx& ctx) {
    ctx.record(BackendKind::similar_image_search);
    if (unavailable_ || ctx.deadline.expired()) {
        return unavailable<std::vector<ScoredDocument>>("image search");
    }
    if (k < 1) {
        return make_error<std::vector<ScoredDocument>>(Errc::precondition,
                                                       "similar_image_search needs k >= 1");
    }
    auto it = neighbors_.find(image.content_digest);
    if (it == neighbors_.end()) {
        return make_error<std::vector<ScoredDocument>>(
            Errc::unknown_image, "no neighbors registered for image '" + image.id + "'");
    }
    auto out = it->second;
    if (out.size() > static_cast<std::size_t>(k)) out.resize(static_cast<std::size_t>(k));
    return out;
}

// --- Safety classifiers --------------------------------------------------------

BlocklistTextSafety::BlocklistTextSafety(std::vector<std::string> blocklist, bool unavailable)
    : blocklist_(std::move(blocklist)), unavailable_(unavailable) {
    for (auto& term : blocklist_) term = to_lower(term);
}

Result<SafetySignal> BlocklistTextSafety::classify_text_safety(const std::string& text,
                                                               const CallCtx& ctx) {
    ctx.record(BackendKind::text_safety_classifier);
    if (unavailable_ || ctx.deadline.expired()) return unavailable<SafetySignal>("text safety");
    const std::string lowered = to_lower(text);
    for (const auto& term : blocklist_) {
        if (!term.empty() && lowered.find(term) != std::string::npos) {
            return SafetySignal{true, 1.0, true};
        }
    }
    return SafetySignal{false, 0.0, true};
}

DigestImageSafety::DigestImageSafety(std::map<std::string, bool> flagged_by_digest,
                                     bool unavailable)
    : flagged_(std::move(flagged_by_digest)), unavailable_(unavailable) {}

Result<SafetySignal> DigestImageSafety::classify_image_safety(const ImageRef& image,
                                                              const CallCtx& ctx) {
    ctx.record(BackendKind::image_safety_classifier);
    if (unavailable_ || ctx.deadline.expired()) return unavailable<SafetySignal>("image safety");
    auto it = flagged_.find(image.content_digest);
    if (it == flagged_.end()) return SafetySignal{false, 0.0, false};
    return it->second ? SafetySignal{true, 1.0, true} : SafetySignal{false, 0.0, true};
}

// --- MockApiConnector ----------------------------------------------------------

MockApiConnector::MockApiConnector(std::string api_id, DocSource category,
                                   std::vector<Document> catalog, bool unavailable)
    : api_id_(std::move(api_id)),
      category_(category),
      catalog_(std::move(catalog)),
      unavailable_(unavailable) {}

Result<std::vector<Document>> MockApiConnector::call(const std::string& search_query,
                                                     const CallCtx& ctx) {
    ctx.record(BackendKind::api_connector);
    if (unavailable_ || ctx.deadline.expired()) {
        return make_error<std::vector<Document>>(Errc::connector_failure,
                                                 "connector '" + api_id_ + "' failed");
    }
    const auto q = overlap_tokens(search_query);
    std::vector<Document> out;
    for (const auto& doc : catalog_) {
        const auto d = overlap_tokens(doc.title + " " + doc.body);
        std::size_t inter = 0;
        for (const auto& t : q) inter += d.count(t);
        if (inter == 0) continue;
        Document hit = doc;
        hit.source = category_;
        hit.retrieval_score = static_cast<double>(inter);
        out.push_back(std::move(hit));
    }
    std::sort(out.begin(), out.end(), [](const Document& a, const Document& b) {
        if (a.retrieval_score != b.retrieval_score) return a.retrieval_score > b.retrieval_score;
        return a.id < b.id;
    });
    return out;
}

// --- Judges ---------------------------------------------------------------------

Result<std::string> FirstPresentedJudge::compare(const std::string& query,
                                                 const std::string& first,
                                                 const std::string& second,
                                                 const std::string& reference, const CallCtx& ctx) {
    (void)query;
    (void)first;
    (void)second;
    (void)reference;
    ctx.record(BackendKind::judge);
    if (ctx.deadline.expired()) return unavailable<std::string>("judge");
    return std::string("A");
}

Result<std::string> LengthPreferringJudge::compare(const std::string& query,
                                                   const std::string& first,
                                                   const std::string& second,
                                                   const std::string& reference,
                                                   const CallCtx& ctx) {
    (void)query;
    (void)reference;
    ctx.record(BackendKind::judge);
    if (ctx.deadline.expired()) return unavailable<std::string>("judge");
    if (first.size() > second.size()) return std::string("A");
    if (second.size() > first.size()) return std::string("B");
    return std::string("TIE");
}

Result<std::string> ReferenceOverlapJudge::compare(const std::string& query,
                                                   const std::string& first,
                                                   const std::string& second,
                                                   const std::string& reference,
                                                   const CallCtx& ctx) {
    (void)query;
    ctx.record(BackendKind::judge);
    if (ctx.deadline.expired()) return unavailable<std::string>("judge");
    const auto ref = overlap_tokens(reference);
    const auto a = overlap_tokens(first);
    const auto b = overlap_tokens(second);
    std::size_t oa = 0, ob = 0;
    for (const auto& t : ref) {
        oa += a.count(t);
        ob += b.count(t);
    }
    if (oa > ob) return std::string("A");
    if (ob > oa) return std::string("B");
    return std::string("TIE");
}

}  // namespace cuem
