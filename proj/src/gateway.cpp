#include "kcp/gateway.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "kcp/errors.hpp"
#include "kcp/hash.hpp"
#include "kcp/text.hpp"

namespace kcp {

std::vector<double> Backend::score_tokens(const std::string&, const std::string&) {
    throw CapabilityError("backend " + id() + " does not support response scoring");
}

std::vector<double> Backend::embed(const std::string&) {
    throw CapabilityError("backend " + id() + " does not support embeddings");
}

// ---------------------------------------------------------------------------
// MockBackend

MockBackend::MockBackend(std::vector<MockRule> rules, MockConfig config,
                         std::vector<MockScoreRule> score_rules)
    : rules_(std::move(rules)), score_rules_(std::move(score_rules)), config_(config) {
    ContentHash h;
    for (const MockRule& r : rules_) {
        for (const std::string& m : r.match) h.add(m);
        h.add(r.response);
        h.add_u64(static_cast<std::uint64_t>(r.times));
        h.add_u64(static_cast<std::uint64_t>(r.fail_times));
        if (r.token_logprobs) {
            for (double lp : *r.token_logprobs) h.add_double(lp);
        }
    }
    for (const MockScoreRule& r : score_rules_) {
        for (const std::string& m : r.match) h.add(m);
        for (double lp : r.token_logprobs) h.add_double(lp);
    }
    h.add_u64(static_cast<std::uint64_t>(config_.uniform_vocab));
    h.add_u64(static_cast<std::uint64_t>(config_.embedding_dim));
    id_ = "mock:" + h.hex();
    hits_.assign(rules_.size(), 0);
    failures_left_.reserve(rules_.size());
    for (const MockRule& r : rules_) failures_left_.push_back(r.fail_times);
}

std::shared_ptr<MockBackend> MockBackend::from_script(const std::filesystem::path& path) {
    std::vector<MockRule> rules;
    std::vector<MockScoreRule> score_rules;
    MockConfig config;
    for_each_jsonl(path, [&](const json& rec, std::size_t line_no) {
        if (rec.contains("config")) {
            const json& c = rec["config"];
            config.uniform_vocab = c.value("uniform_vocab", 0);
            config.embedding_dim = c.value("embedding_dim", 0);
            config.delay_jitter_ms = c.value("delay_jitter_ms", 0);
            return;
        }
        if (rec.contains("score_match")) {
            MockScoreRule r;
            r.match = rec["score_match"].get<std::vector<std::string>>();
            r.token_logprobs = rec.value("token_logprobs", std::vector<double>{});
            score_rules.push_back(std::move(r));
            return;
        }
        if (!rec.contains("match") || !rec.contains("response")) {
            throw IngestError("mock script " + path.string() + " line " + std::to_string(line_no) +
                              ": rule needs match and response");
        }
        MockRule r;
        r.match = rec["match"].get<std::vector<std::string>>();
        r.response = rec["response"].get<std::string>();
        if (rec.contains("token_logprobs")) {
            r.token_logprobs = rec["token_logprobs"].get<std::vector<double>>();
        }
        r.times = rec.value("times", 0);
        r.fail_times = rec.value("fail_times", 0);
        rules.push_back(std::move(r));
    });
    return std::make_shared<MockBackend>(std::move(rules), config, std::move(score_rules));
}

BackendResult MockBackend::generate(const GenerationRequest& req) {
    if (config_.delay_jitter_ms > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(
            fnv1a64(req.prompt) % static_cast<std::uint64_t>(config_.delay_jitter_ms)));
    }
    std::lock_guard<std::mutex> lock(mu_);
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        const MockRule& r = rules_[i];
        bool all = true;
        for (const std::string& m : r.match) {
            if (req.prompt.find(m) == std::string::npos) {
                all = false;
                break;
            }
        }
        if (!all) continue;
        if (r.times > 0 && hits_[i] >= r.times) continue;
        if (failures_left_[i] > 0) {
            --failures_left_[i];
            throw TransportError("mock: scripted transport failure (rule " + std::to_string(i) +
                                 ")");
        }
        ++hits_[i];
        return {r.response, r.token_logprobs};
    }
    std::string head = req.prompt.substr(0, 80);
    throw GatewayError("mock: no rule matches prompt starting with: " + head);
}

bool MockBackend::supports_scoring() const {
    return config_.uniform_vocab > 0 || !score_rules_.empty();
}

std::vector<double> MockBackend::score_tokens(const std::string& prompt,
                                              const std::string& response) {
    std::string key = prompt + "\x1f" + response;
    for (const MockScoreRule& r : score_rules_) {
        bool all = true;
        for (const std::string& m : r.match) {
            if (key.find(m) == std::string::npos) {
                all = false;
                break;
            }
        }
        if (all) return r.token_logprobs;
    }
    if (config_.uniform_vocab > 0) {
        std::size_t n = token_count(response);
        return std::vector<double>(n, std::log(1.0 / config_.uniform_vocab));
    }
    if (!score_rules_.empty()) {
        throw GatewayError("mock: no score rule matches prompt starting with: " +
                           prompt.substr(0, 80));
    }
    throw CapabilityError("backend " + id_ + " does not support response scoring");
}

std::vector<double> MockBackend::embed(const std::string& text) {
    if (config_.embedding_dim <= 0) {
        throw CapabilityError("backend " + id_ + " does not support embeddings");
    }
    std::vector<double> v(static_cast<std::size_t>(config_.embedding_dim), 0.0);
    for (const std::string& tok : ws_tokens(to_lower(text))) {
        v[fnv1a64(tok) % v.size()] += 1.0;
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm > 0) {
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;
    }
    return v;
}

// ---------------------------------------------------------------------------
// HttpBackend

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {}

std::string HttpBackend::id() const {
    return "http:" + config_.base_url + "#" + config_.model;
}

json HttpBackend::post(const std::string& route, const json& body) {
    httplib::Client client(config_.base_url);
    client.set_connection_timeout(config_.timeout_s);
    client.set_read_timeout(config_.timeout_s);
    httplib::Headers headers;
    if (const char* token = std::getenv(config_.auth_env.c_str()); token && *token) {
        headers.emplace("Authorization", std::string("Bearer ") + token);
    }
    auto res = client.Post(route, headers, body.dump(), "application/json");
    if (!res) {
        throw TransportError("http backend: no response from " + config_.base_url + route);
    }
    if (res->status == 429 || res->status >= 500) {
        throw TransportError("http backend: status " + std::to_string(res->status) + " from " +
                             route);
    }
    if (res->status != 200) {
        throw GatewayError("http backend: status " + std::to_string(res->status) + " from " +
                           route + ": " + res->body.substr(0, 200));
    }
    json parsed = json::parse(res->body, nullptr, false);
    if (parsed.is_discarded()) {
        throw GatewayError("http backend: unparseable response body from " + route);
    }
    return parsed;
}

BackendResult HttpBackend::generate(const GenerationRequest& req) {
    json body{{"model", config_.model},
              {"messages", json::array({json{{"role", "user"}, {"content", req.prompt}}})},
              {"temperature", req.temperature},
              {"max_tokens", req.max_new_tokens},
              {"logprobs", true}};
    if (!req.stop_sequences.empty()) body["stop"] = req.stop_sequences;
    json res = post("/v1/chat/completions", body);

    if (!res.contains("choices") || res["choices"].empty()) {
        throw GatewayError("http backend: response has no choices");
    }
    const json& choice = res["choices"][0];
    BackendResult out;
    out.text = choice.value("message", json::object()).value("content", "");
    if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
        choice["logprobs"].contains("content")) {
        std::vector<double> lps;
        for (const json& t : choice["logprobs"]["content"]) {
            if (t.contains("logprob")) lps.push_back(t["logprob"].get<double>());
        }
        if (!lps.empty()) out.token_logprobs = std::move(lps);
    }
    return out;
}

std::vector<double> HttpBackend::score_tokens(const std::string& prompt,
                                              const std::string& response) {
    // Legacy completions with echo: token offsets let us keep only the
    // tokens that belong to the response suffix.
    json body{{"model", config_.model}, {"prompt", prompt + response},
              {"max_tokens", 0},        {"echo", true},
              {"logprobs", 0},          {"temperature", 0.0}};
    json res = post("/v1/completions", body);
    if (!res.contains("choices") || res["choices"].empty()) {
        throw CapabilityError("http backend: completions endpoint returned no choices");
    }
    const json& lp = res["choices"][0].value("logprobs", json::object());
    if (!lp.contains("token_logprobs") || !lp.contains("text_offset")) {
        throw CapabilityError("http backend: completions endpoint returned no token logprobs");
    }
    std::vector<double> out;
    const json& offsets = lp["text_offset"];
    const json& logprobs = lp["token_logprobs"];
    for (std::size_t i = 0; i < logprobs.size() && i < offsets.size(); ++i) {
        if (offsets[i].get<std::size_t>() >= prompt.size() && !logprobs[i].is_null()) {
            out.push_back(logprobs[i].get<double>());
        }
    }
    if (out.empty()) {
        throw CapabilityError("http backend: no scored tokens fall inside the response span");
    }
    return out;
}

std::vector<double> HttpBackend::embed(const std::string& text) {
    json res = post("/v1/embeddings", json{{"model", config_.model}, {"input", text}});
    if (!res.contains("data") || res["data"].empty() || !res["data"][0].contains("embedding")) {
        throw CapabilityError("http backend: embeddings endpoint returned no vector");
    }
    return res["data"][0]["embedding"].get<std::vector<double>>();
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway(std::shared_ptr<Backend> backend, GatewayConfig config)
    : backend_(std::move(backend)),
      config_(std::move(config)),
      inflight_(config_.max_parallel > 0 ? config_.max_parallel : 1) {
    if (!config_.cache_dir.empty()) std::filesystem::create_directories(config_.cache_dir);
}

std::optional<json> Gateway::cache_load(const std::string& key) {
    if (config_.cache_dir.empty()) return std::nullopt;
    std::filesystem::path p = config_.cache_dir / (key + ".json");
    std::lock_guard<std::mutex> lock(cache_mu_);
    if (!std::filesystem::exists(p)) return std::nullopt;
    json parsed = json::parse(read_file(p), nullptr, false);
    if (parsed.is_discarded()) return std::nullopt;  // treat torn writes as misses
    return parsed;
}

void Gateway::cache_store(const std::string& key, const json& value) {
    if (config_.cache_dir.empty()) return;
    std::filesystem::path p = config_.cache_dir / (key + ".json");
    std::filesystem::path tmp = config_.cache_dir / (key + ".tmp");
    std::lock_guard<std::mutex> lock(cache_mu_);
    write_file(tmp, value.dump());
    std::filesystem::rename(tmp, p);
}

template <typename Fn>
auto Gateway::with_retries(const std::string& tag, Fn&& fn) {
    int attempts = config_.retry_attempts > 0 ? config_.retry_attempts : 1;
    std::chrono::milliseconds delay = config_.retry_base_delay;
    for (int attempt = 1;; ++attempt) {
        try {
            inflight_.acquire();
            struct Release {
                std::counting_semaphore<>* s;
                ~Release() { s->release(); }
            } release{&inflight_};
            return fn();
        } catch (const TransportError& e) {
            if (attempt >= attempts) {
                throw GatewayError("request " + (tag.empty() ? std::string("<untagged>") : tag) +
                                   " failed after " + std::to_string(attempt) +
                                   " attempts: " + e.what());
            }
            std::this_thread::sleep_for(delay);
            delay *= 2;
        }
    }
}

ScoredResponse Gateway::generate(const GenerationRequest& req) {
    if (req.prompt.empty()) throw PreconditionError("generate: empty prompt");

    // Only temperature-0 requests are deterministic per the backend
    // contract, so only they are cacheable.
    bool cacheable = req.temperature == 0.0 && !config_.cache_dir.empty();
    std::string key;
    if (cacheable) {
        ContentHash h;
        h.add("generate").add(backend_->id()).add(req.prompt).add_double(req.temperature);
        h.add_u64(static_cast<std::uint64_t>(req.max_new_tokens));
        for (const std::string& s : req.stop_sequences) h.add(s);
        key = h.hex();
        if (auto hit = cache_load(key)) {
            ScoredResponse out;
            out.text = hit->value("text", "");
            if (hit->contains("mean_token_logprob") && !(*hit)["mean_token_logprob"].is_null()) {
                out.mean_token_logprob = (*hit)["mean_token_logprob"].get<double>();
            }
            out.backend_id = hit->value("backend_id", backend_->id());
            out.cached = true;
            return out;
        }
    }

    BackendResult result = with_retries(req.request_tag, [&] { return backend_->generate(req); });

    ScoredResponse out;
    out.text = result.text;
    out.backend_id = backend_->id();
    if (result.token_logprobs && !result.token_logprobs->empty()) {
        double sum = 0;
        for (double lp : *result.token_logprobs) sum += lp;
        out.mean_token_logprob = sum / static_cast<double>(result.token_logprobs->size());
    }
    if (cacheable) {
        json entry{{"text", out.text}, {"backend_id", out.backend_id}};
        if (out.mean_token_logprob) {
            entry["mean_token_logprob"] = *out.mean_token_logprob;
        } else {
            entry["mean_token_logprob"] = nullptr;
        }
        cache_store(key, entry);
    }
    return out;
}

std::vector<ScoredResponse> Gateway::generate_batch(const std::vector<GenerationRequest>& reqs) {
    std::vector<ScoredResponse> results(reqs.size());
    std::vector<std::exception_ptr> errors(reqs.size());
    std::atomic<std::size_t> next{0};
    int workers = std::min<int>(config_.max_parallel > 0 ? config_.max_parallel : 1,
                                static_cast<int>(reqs.size()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < reqs.size(); ++i) results[i] = generate(reqs[i]);
        return results;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= reqs.size()) return;
                try {
                    results[i] = generate(reqs[i]);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (std::thread& t : pool) t.join();
    for (std::exception_ptr& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return results;
}

double Gateway::score_response(const std::string& prompt, const std::string& response) {
    if (token_count(response) == 0) {
        throw PreconditionError("score_response: response has zero tokens");
    }
    if (!backend_->supports_scoring()) {
        throw CapabilityError("backend " + backend_->id() + " does not support response scoring");
    }
    std::string key;
    bool cacheable = !config_.cache_dir.empty();
    if (cacheable) {
        key = ContentHash().add("score").add(backend_->id()).add(prompt).add(response).hex();
        if (auto hit = cache_load(key)) return hit->value("mean", 0.0);
    }
    std::vector<double> lps =
        with_retries("score", [&] { return backend_->score_tokens(prompt, response); });
    if (lps.empty()) throw PreconditionError("score_response: backend scored zero tokens");
    double sum = 0;
    for (double lp : lps) sum += lp;
    double mean = sum / static_cast<double>(lps.size());
    if (cacheable) cache_store(key, json{{"mean", mean}});
    return mean;
}

std::vector<double> Gateway::embed(const std::string& text) {
    if (!backend_->supports_embedding()) {
        throw CapabilityError("backend " + backend_->id() + " does not support embeddings");
    }
    std::string key;
    bool cacheable = !config_.cache_dir.empty();
    if (cacheable) {
        key = ContentHash().add("embed").add(backend_->id()).add(text).hex();
        if (auto hit = cache_load(key)) return hit->value("vector", std::vector<double>{});
    }
    std::vector<double> v = with_retries("embed", [&] { return backend_->embed(text); });
    if (cacheable) cache_store(key, json{{"vector", v}});
    return v;
}

std::shared_ptr<Backend> make_backend(const std::string& spec, const std::string& model,
                                      const std::string& auth_env) {
    if (spec.rfind("mock:", 0) == 0) {
        return MockBackend::from_script(spec.substr(5));
    }
    if (spec.rfind("http:", 0) == 0 || spec.rfind("https:", 0) == 0) {
        HttpBackendConfig cfg;
        cfg.base_url = spec;
        cfg.model = model;
        cfg.auth_env = auth_env;
        return std::make_shared<HttpBackend>(std::move(cfg));
    }
    throw PreconditionError("unknown backend spec: " + spec +
                            " (expected mock:<script.jsonl> or http(s)://host)");
}

}  // namespace kcp
