#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "cuem/types.hpp"

namespace cuem {

/// In-memory BM25 index over a fixed document corpus (k1 = 1.2, b = 0.75,
/// Lucene-style non-negative idf). Immutable after construction; safe for
/// concurrent queries.
class Bm25Index {
public:
    explicit Bm25Index(std::vector<Document> corpus);

    /// Top-k by (score desc, id asc); zero-score documents are not returned.
    std::vector<Document> search(const std::string& query, int k) const;

    std::size_t size() const { return docs_.size(); }

private:
    struct Posting {
        std::size_t doc;
        int tf;
    };

    std::vector<Document> docs_;
    std::vector<double> lengths_;
    double avg_length_ = 0.0;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
};

}  // namespace cuem
