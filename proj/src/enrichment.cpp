#include "cuem/enrichment.hpp"

#include <algorithm>
#include <future>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "cuem/text.hpp"

namespace cuem {

namespace {
constexpr int kKeywordsPerDoc = 5;
}

Result<std::vector<ImageTag>> extract_tags(const ImageRef& image,
                                           const std::vector<ScoredDocument>& similar,
                                           const std::vector<InteractionRecord>& interaction_log,
                                           double annotated_threshold) {
    if (annotated_threshold < 0.0 || annotated_threshold > 1.0) {
        return make_error<std::vector<ImageTag>>(Errc::precondition,
                                                 "annotated_threshold must be in [0,1]");
    }

    std::vector<ImageTag> tags;
    for (const auto& rec : interaction_log) {
        if (rec.image_id != image.id) continue;
        tags.push_back({rec.query, 2.0 * 1.0, TagOrigin::interaction});
    }
    for (const auto& sd : similar) {
        if (sd.similarity >= annotated_threshold && !trim(sd.doc.title).empty()) {
            tags.push_back({sd.doc.title, 3.0 * sd.similarity, TagOrigin::annotated});
        }
        auto keywords = extract_keywords(sd.doc, kKeywordsPerDoc);
        if (!keywords.ok()) return keywords.error();
        for (const auto& kw : keywords.value()) {
            tags.push_back({kw, 1.0 * sd.similarity, TagOrigin::extracted});
        }
    }
    return normalize_tags(std::move(tags));
}

Result<std::vector<std::string>> extract_keywords(const Document& doc, int max_k) {
    if (max_k < 1) {
        return make_error<std::vector<std::string>>(Errc::precondition,
                                                    "extract_keywords needs max_k >= 1");
    }
    std::map<std::string, int> freq;
    for (const auto& token : tokenize(doc.body)) {
        if (is_stopword(token)) continue;
        ++freq[token];
    }
    std::vector<std::pair<std::string, int>> ranked(freq.begin(), freq.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (ranked.size() > static_cast<std::size_t>(max_k)) {
        ranked.resize(static_cast<std::size_t>(max_k));
    }
    std::vector<std::string> out;
    out.reserve(ranked.size());
    for (auto& [term, _] : ranked) out.push_back(std::move(term));
    return out;
}

Result<std::vector<Document>> tag_text_search(const std::vector<ImageTag>& tags,
                                              const std::string& user_text, int k,
                                              TextSearch& search, const CallCtx& ctx,
                                              int tags_to_search) {
    (void)user_text;  // present in the contract precisely because it must never be searched
    if (k < 1) {
        return make_error<std::vector<Document>>(Errc::precondition,
                                                 "tag_text_search needs k >= 1");
    }
    std::unordered_map<std::string, Document> by_id;
    const auto limit = std::min<std::size_t>(tags.size(), static_cast<std::size_t>(tags_to_search));
    for (std::size_t i = 0; i < limit; ++i) {
        auto hits = search.text_search(tags[i].tag, k, std::nullopt, ctx);
        if (!hits.ok()) return hits.error();
        for (auto& doc : hits.take()) {
            auto it = by_id.find(doc.id);
            if (it == by_id.end()) {
                by_id.emplace(doc.id, std::move(doc));
            } else if (doc.retrieval_score > it->second.retrieval_score) {
                it->second = std::move(doc);
            }
        }
    }
    std::vector<Document> out;
    out.reserve(by_id.size());
    for (auto& [_, doc] : by_id) out.push_back(std::move(doc));
    std::sort(out.begin(), out.end(), [](const Document& a, const Document& b) {
        if (a.retrieval_score != b.retrieval_score) return a.retrieval_score > b.retrieval_score;
        return a.id < b.id;
    });
    if (out.size() > static_cast<std::size_t>(k)) out.resize(static_cast<std::size_t>(k));
    return out;
}

Result<ImageContext> enrich(const MultimodalQuery& query, const PipelineConfig& cfg,
                            const Backends& backends,
                            const std::vector<InteractionRecord>& interaction_log,
                            Warnings* warnings, const CallCtx& ctx) {
    if (!query.image.has_value()) {
        return make_error<ImageContext>(Errc::no_image, "enrich needs an image in the query");
    }
    const ImageRef& image = *query.image;

    // Caption and similar-image search are independent; fan out.
    auto caption_fut = std::async(std::launch::async, [&] {
        return backends.describer->describe_image(image, ctx);
    });
    auto similar_fut = std::async(std::launch::async, [&] {
        return backends.image_search->similar_image_search(image, cfg.k_top_docs, ctx);
    });

    std::string description;
    auto caption = caption_fut.get();
    if (caption.ok()) {
        description = caption.take();
    } else {
        warn(warnings, "enrichment", "caption failed: " + caption.error().message);
    }

    std::vector<ScoredDocument> similar;
    auto neighbors = similar_fut.get();
    if (neighbors.ok()) {
        similar = neighbors.take();
    } else {
        warn(warnings, "enrichment", "similar-image search failed: " + neighbors.error().message);
    }

    auto tags = extract_tags(image, similar, interaction_log,
                             cfg.annotated_tag_similarity_threshold);
    if (!tags.ok()) return tags.error();

    std::vector<Document> tag_docs;
    if (!tags.value().empty()) {
        auto found = tag_text_search(tags.value(), query.text, cfg.k_top_docs, *backends.search,
                                     ctx);
        if (found.ok()) {
            tag_docs = found.take();
        } else {
            warn(warnings, "enrichment", "tag search failed: " + found.error().message);
        }
    }

    if (description.empty() && similar.empty() && tag_docs.empty() && tags.value().empty()) {
        return make_error<ImageContext>(Errc::enrichment_empty,
                                        "caption, similar search and tag search all failed");
    }

    // Merge tag-search hits into the similar-docs pool. Documents already
    // found by image similarity keep their entry; new ones join as web docs
    // with zero visual similarity (their retrieval_score carries the rank).
    std::unordered_set<std::string> seen;
    for (const auto& sd : similar) seen.insert(sd.doc.id);
    for (auto& doc : tag_docs) {
        if (!seen.insert(doc.id).second) continue;
        doc.source = DocSource::web;
        similar.push_back({std::move(doc), 0.0});
    }

    return make_image_context(std::move(description), tags.take(), std::move(similar));
}

}  // namespace cuem
