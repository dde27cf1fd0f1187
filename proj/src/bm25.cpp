#include "cuem/bm25.hpp"

#include <algorithm>
#include <cmath>

#include "cuem/text.hpp"

namespace cuem {

namespace {
constexpr double kK1 = 1.2;
constexpr double kB = 0.75;
}  // namespace

Bm25Index::Bm25Index(std::vector<Document> corpus) : docs_(std::move(corpus)) {
    lengths_.reserve(docs_.size());
    double total_length = 0.0;
    for (std::size_t i = 0; i < docs_.size(); ++i) {
        const auto tokens = tokenize(docs_[i].title + " " + docs_[i].body);
        lengths_.push_back(static_cast<double>(tokens.size()));
        total_length += static_cast<double>(tokens.size());

        std::unordered_map<std::string, int> tf;
        for (const auto& t : tokens) ++tf[t];
        for (const auto& [term, count] : tf) {
            postings_[term].push_back({i, count});
        }
    }
    avg_length_ = docs_.empty() ? 0.0 : total_length / static_cast<double>(docs_.size());
}

std::vector<Document> Bm25Index::search(const std::string& query, int k) const {
    std::vector<double> scores(docs_.size(), 0.0);
    const double n = static_cast<double>(docs_.size());
    for (const auto& term : tokenize(query)) {
        auto it = postings_.find(term);
        if (it == postings_.end()) continue;
        const double df = static_cast<double>(it->second.size());
        const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
        for (const auto& p : it->second) {
            const double tf = static_cast<double>(p.tf);
            const double norm = kK1 * (1.0 - kB + kB * lengths_[p.doc] / avg_length_);
            scores[p.doc] += idf * (tf * (kK1 + 1.0)) / (tf + norm);
        }
    }

    std::vector<std::size_t> hit;
    for (std::size_t i = 0; i < docs_.size(); ++i) {
        if (scores[i] > 0.0) hit.push_back(i);
    }
    std::sort(hit.begin(), hit.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return docs_[a].id < docs_[b].id;
    });
    if (static_cast<int>(hit.size()) > k) hit.resize(static_cast<std::size_t>(k));

    std::vector<Document> out;
    out.reserve(hit.size());
    for (std::size_t i : hit) {
        Document d = docs_[i];
        d.retrieval_score = scores[i];
        out.push_back(std::move(d));
    }
    return out;
}

}  // namespace cuem
