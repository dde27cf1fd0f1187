#pragma once

#include <string>

#include "cuem/backends.hpp"
#include "cuem/result.hpp"

namespace cuem {

// ---------------------------------------------------------------------------
// JSON-over-HTTP adapters, one per backend capability. Every adapter POSTs a
// JSON body to {base_url}/v1/<op> and expects a 200 with a JSON body back:
//
//   op               request                                   response
//   ---------------- ----------------------------------------- -----------------------------
//   generate         {prompt, temperature, max_tokens, seed}   {text}
//   describe         {image: ImageRef}                         {caption}
//   score_token      {prompt, positive_token}                  {likelihood}
//   embed            {text}                                    {values: [real, ...]}
//   score_pair       {premise, hypothesis}                     {score}
//   search           {query, k, domain_filter: string|null}    {documents: [Document, ...]}
//   similar_images   {image: ImageRef, k}                      {documents: [{doc, similarity}]}
//   classify_text    {text}                                    {unsafe, score, recognized}
//   classify_image   {image: ImageRef}                         {unsafe, score, recognized}
//   api_call         {api_id, query}                           {documents: [Document, ...]}
//   judge            {query, first, second, reference}         {verdict}
//
// GET {base_url}/v1/health must answer 200 for the startup probe. Transport
// failures and non-200 statuses map to BackendUnavailable; a 200 whose body
// does not match the schema maps to ParseError. The call deadline caps the
// connection/read/write timeouts, so an expiring budget fails fast instead of
// hanging a pipeline stage.
// ---------------------------------------------------------------------------

/// GET {base_url}/v1/health; ok iff the endpoint answers 200.
Result<void> probe_backend(const std::string& base_url);

class HttpTextGenerator : public TextGenerator {
public:
    explicit HttpTextGenerator(std::string base_url, std::string model_id = "remote-generator");
    Result<std::string> generate(const std::string& prompt, const DecodingParams& params,
                                 const CallCtx& ctx) override;
    std::string model_id() const override { return model_id_; }

private:
    std::string base_url_;
    std::string model_id_;
};

class HttpDescriber : public MultimodalDescriber {
public:
    explicit HttpDescriber(std::string base_url);
    Result<std::string> describe_image(const ImageRef& image, const CallCtx& ctx) override;

private:
    std::string base_url_;
};

class HttpTokenScorer : public TokenScorer {
public:
    explicit HttpTokenScorer(std::string base_url);
    Result<double> positive_likelihood(const std::string& prompt,
                                       const std::string& positive_token,
                                       const CallCtx& ctx) override;

private:
    std::string base_url_;
};

class HttpEmbedder : public Embedder {
public:
    explicit HttpEmbedder(std::string base_url);
    Result<Embedding> embed(const std::string& text, const CallCtx& ctx) override;

private:
    std::string base_url_;
};

class HttpPairScorer : public PairScorer {
public:
    explicit HttpPairScorer(std::string base_url, BackendKind recorded_kind);
    Result<double> score_pair(const std::string& premise, const std::string& hypothesis,
                              const CallCtx& ctx) override;

private:
    std::string base_url_;
    BackendKind kind_;
};

class HttpTextSearch : public TextSearch {
public:
    explicit HttpTextSearch(std::string base_url);
    Result<std::vector<Document>> text_search(const std::string& query, int k,
                                              const std::optional<std::string>& domain_filter,
                                              const CallCtx& ctx) override;

private:
    std::string base_url_;
};

class HttpSimilarImageSearch : public SimilarImageSearch {
public:
    explicit HttpSimilarImageSearch(std::string base_url);
    Result<std::vector<ScoredDocument>> similar_image_search(const ImageRef& image, int k,
                                                             const CallCtx& ctx) override;

private:
    std::string base_url_;
};

class HttpTextSafety : public TextSafetyClassifier {
public:
    explicit HttpTextSafety(std::string base_url);
    Result<SafetySignal> classify_text_safety(const std::string& text,
                                              const CallCtx& ctx) override;

private:
    std::string base_url_;
};

class HttpImageSafety : public ImageSafetyClassifier {
public:
    explicit HttpImageSafety(std::string base_url);
    Result<SafetySignal> classify_image_safety(const ImageRef& image,
                                               const CallCtx& ctx) override;

private:
    std::string base_url_;
};

class HttpApiConnector : public ApiConnector {
public:
    HttpApiConnector(std::string base_url, std::string api_id);
    Result<std::vector<Document>> call(const std::string& search_query,
                                       const CallCtx& ctx) override;

private:
    std::string base_url_;
    std::string api_id_;
};

class HttpJudge : public Judge {
public:
    explicit HttpJudge(std::string base_url);
    Result<std::string> compare(const std::string& query, const std::string& first,
                                const std::string& second, const std::string& reference,
                                const CallCtx& ctx) override;

private:
    std::string base_url_;
};

}  // namespace cuem
