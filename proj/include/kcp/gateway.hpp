#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "kcp/jsonl.hpp"

namespace kcp {

struct GenerationRequest {
    std::string prompt;
    double temperature = 0.0;
    int max_new_tokens = 256;
    std::vector<std::string> stop_sequences;
    std::string request_tag;  // carried into error messages and logs
};

struct ScoredResponse {
    std::string text;
    std::optional<double> mean_token_logprob;
    std::string backend_id;
    bool cached = false;
};

struct BackendResult {
    std::string text;
    std::optional<std::vector<double>> token_logprobs;
};

class Backend {
  public:
    virtual ~Backend() = default;
    virtual std::string id() const = 0;
    virtual BackendResult generate(const GenerationRequest& req) = 0;

    virtual bool supports_scoring() const { return false; }
    // Per-token log-probabilities of `response` conditioned on `prompt`,
    // under the backend's own tokenizer.
    virtual std::vector<double> score_tokens(const std::string& prompt,
                                             const std::string& response);

    virtual bool supports_embedding() const { return false; }
    virtual std::vector<double> embed(const std::string& text);
};

// Deterministic scripted backend. Rules are evaluated in order; a rule
// matches when every string in `match` occurs in the prompt. `times` > 0
// limits how often a rule fires before falling through (lets tests script
// retry sequences); `fail_times` > 0 makes the first N hits raise a
// transport error (lets tests script flaky transports).
struct MockRule {
    std::vector<std::string> match;
    std::string response;
    std::optional<std::vector<double>> token_logprobs;
    int times = 0;
    int fail_times = 0;
};

// Scoring rules match against prompt and response together.
struct MockScoreRule {
    std::vector<std::string> match;
    std::vector<double> token_logprobs;
};

struct MockConfig {
    // Uniform-vocabulary scoring: every whitespace token of the response
    // gets logprob log(1/uniform_vocab). 0 disables.
    int uniform_vocab = 0;
    // Hashed bag-of-words embeddings of this dimension. 0 disables.
    int embedding_dim = 0;
    // Deterministic per-prompt delay (hash(prompt) % jitter ms); lets
    // concurrency tests vary completion order without losing determinism.
    int delay_jitter_ms = 0;
};

class MockBackend : public Backend {
  public:
    MockBackend(std::vector<MockRule> rules, MockConfig config = {},
                std::vector<MockScoreRule> score_rules = {});
    // Script file: JSONL. An optional {"config": {...}} line, then rule
    // lines {"match": [...], "response": "...", "token_logprobs": [...],
    // "times": N, "fail_times": N} and {"score_match": [...],
    // "token_logprobs": [...]}.
    static std::shared_ptr<MockBackend> from_script(const std::filesystem::path& path);

    std::string id() const override { return id_; }
    BackendResult generate(const GenerationRequest& req) override;
    bool supports_scoring() const override;
    std::vector<double> score_tokens(const std::string& prompt,
                                     const std::string& response) override;
    bool supports_embedding() const override { return config_.embedding_dim > 0; }
    std::vector<double> embed(const std::string& text) override;

  private:
    std::vector<MockRule> rules_;
    std::vector<MockScoreRule> score_rules_;
    MockConfig config_;
    std::string id_;
    std::vector<int> hits_;
    std::vector<int> failures_left_;
    std::mutex mu_;
};

// Chat-completions style HTTP backend. The bearer token is read from the
// environment variable named by auth_env; credentials never appear in
// config files or manifests.
struct HttpBackendConfig {
    std::string base_url;  // e.g. http://127.0.0.1:8080
    std::string model = "default";
    std::string auth_env = "KCP_API_TOKEN";
    int timeout_s = 60;
};

class HttpBackend : public Backend {
  public:
    explicit HttpBackend(HttpBackendConfig config);
    std::string id() const override;
    BackendResult generate(const GenerationRequest& req) override;
    bool supports_scoring() const override { return true; }
    std::vector<double> score_tokens(const std::string& prompt,
                                     const std::string& response) override;
    bool supports_embedding() const override { return true; }
    std::vector<double> embed(const std::string& text) override;

  private:
    json post(const std::string& route, const json& body);
    HttpBackendConfig config_;
};

struct GatewayConfig {
    std::filesystem::path cache_dir;  // empty disables the disk cache
    int max_parallel = 4;
    int retry_attempts = 3;
    std::chrono::milliseconds retry_base_delay{50};
};

// Front door for all model traffic: content-addressed disk cache for
// deterministic (temperature 0) requests, bounded retries with exponential
// backoff on transport errors, and a global in-flight bound.
class Gateway {
  public:
    Gateway(std::shared_ptr<Backend> backend, GatewayConfig config);

    ScoredResponse generate(const GenerationRequest& req);
    // Fan-out helper; results come back in request order no matter which
    // requests finish first. At most max_parallel requests are in flight.
    std::vector<ScoredResponse> generate_batch(const std::vector<GenerationRequest>& reqs);

    // Mean token log-probability of `response` given `prompt`.
    double score_response(const std::string& prompt, const std::string& response);
    std::vector<double> embed(const std::string& text);

    std::string backend_id() const { return backend_->id(); }
    bool supports_scoring() const { return backend_->supports_scoring(); }
    bool supports_embedding() const { return backend_->supports_embedding(); }

  private:
    std::optional<json> cache_load(const std::string& key);
    void cache_store(const std::string& key, const json& value);
    template <typename Fn>
    auto with_retries(const std::string& tag, Fn&& fn);

    std::shared_ptr<Backend> backend_;
    GatewayConfig config_;
    std::counting_semaphore<> inflight_;
    std::mutex cache_mu_;
};

// "mock:<script path>" or "http:<base url>".
std::shared_ptr<Backend> make_backend(const std::string& spec, const std::string& model,
                                      const std::string& auth_env);

}  // namespace kcp
