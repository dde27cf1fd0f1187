#include "cuem/backends.hpp"

#include <cmath>

namespace cuem {

const char* backend_kind_name(BackendKind k) {
    switch (k) {
        case BackendKind::text_generator: return "text_generator";
        case BackendKind::multimodal_describer: return "multimodal_describer";
        case BackendKind::token_scorer: return "token_scorer";
        case BackendKind::embedder: return "embedder";
        case BackendKind::nli_scorer: return "nli_scorer";
        case BackendKind::text_search: return "text_search";
        case BackendKind::similar_image_search: return "similar_image_search";
        case BackendKind::text_safety_classifier: return "text_safety_classifier";
        case BackendKind::image_safety_classifier: return "image_safety_classifier";
        case BackendKind::api_connector: return "api_connector";
        case BackendKind::judge: return "judge";
    }
    return "unknown";
}

double l2_norm(const Embedding& e) {
    double sum = 0.0;
    for (double v : e.values) sum += v * v;
    return std::sqrt(sum);
}

Result<double> cosine(const Embedding& a, const Embedding& b) {
    if (a.dim() == 0 || b.dim() == 0) {
        return make_error<double>(Errc::invalid_argument, "cosine of empty embedding");
    }
    if (a.dim() != b.dim()) {
        return make_error<double>(Errc::invalid_argument,
                                  "embedding dims differ: " + std::to_string(a.dim()) + " vs " +
                                      std::to_string(b.dim()));
    }
    if (a.values == b.values) return 1.0;
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    double dot = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) dot += a.values[i] * b.values[i];
    return dot / (na * nb);
}

}  // namespace cuem
