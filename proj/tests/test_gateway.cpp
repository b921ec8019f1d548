#include <atomic>
#include <chrono>
#include <cmath>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "doctest.h"
#include "kcp/errors.hpp"
#include "kcp/gateway.hpp"
#include "testutil.hpp"

using namespace kcp;

namespace {

GenerationRequest req(const std::string& prompt, double temp = 0.0) {
    GenerationRequest r;
    r.prompt = prompt;
    r.temperature = temp;
    r.request_tag = "test";
    return r;
}

std::shared_ptr<MockBackend> make_mock(std::vector<MockRule> rules, MockConfig cfg = {},
                                       std::vector<MockScoreRule> score = {}) {
    return std::make_shared<MockBackend>(std::move(rules), cfg, std::move(score));
}

}  // namespace

TEST_CASE("mock backend matches rules in order, all fragments required") {
    auto backend = make_mock({
        {{"alpha", "beta"}, "both", std::nullopt, 0, 0},
        {{"alpha"}, "only-alpha", std::nullopt, 0, 0},
    });
    Gateway gw(backend, {});
    CHECK(gw.generate(req("has alpha and beta inside")).text == "both");
    CHECK(gw.generate(req("just alpha here")).text == "only-alpha");
    CHECK_THROWS_AS(gw.generate(req("nothing relevant")), GatewayError);
    CHECK_THROWS_WITH_AS(gw.generate(req("")), doctest::Contains("empty prompt"),
                         PreconditionError);
}

TEST_CASE("scoring: explicit logprobs average to the mean") {
    auto backend = make_mock({}, {}, {{{"the prompt"}, {-0.5, -0.5, -1.0}}});
    Gateway gw(backend, {});
    CHECK(gw.score_response("the prompt", "any response") == doctest::Approx(-2.0 / 3.0));
}

TEST_CASE("scoring: uniform vocabulary fallback") {
    MockConfig cfg;
    cfg.uniform_vocab = 4;
    auto backend = make_mock({}, cfg);
    Gateway gw(backend, {});
    CHECK(gw.score_response("p", "two tokens") == doctest::Approx(std::log(0.25)));
    CHECK(backend->supports_scoring());
}

TEST_CASE("scoring: single token and zero tokens") {
    auto backend = make_mock({}, {}, {{{"q"}, {-0.1}}});
    Gateway gw(backend, {});
    CHECK(gw.score_response("q", "word") == doctest::Approx(-0.1));
    CHECK_THROWS_WITH_AS(gw.score_response("q", "   "), doctest::Contains("zero tokens"),
                         PreconditionError);
}

TEST_CASE("score rules match prompt and response together") {
    auto backend = make_mock({}, {}, {{{"prompt-frag", "response-frag"}, {-3.0}}});
    Gateway gw(backend, {});
    CHECK(gw.score_response("has prompt-frag", "has response-frag") == doctest::Approx(-3.0));
    CHECK_THROWS_AS(gw.score_response("has prompt-frag", "other"), GatewayError);
}

TEST_CASE("temperature-zero generations hit the disk cache") {
    auto dir = testutil::fresh_dir("gwcache");
    auto backend = make_mock({{{"ping"}, "pong", std::nullopt, 0, 0}});
    GatewayConfig cfg;
    cfg.cache_dir = dir / "cache";
    Gateway gw(backend, cfg);

    auto first = gw.generate(req("ping"));
    CHECK(first.text == "pong");
    CHECK_FALSE(first.cached);
    auto second = gw.generate(req("ping"));
    CHECK(second.cached);
    CHECK(second.text == first.text);

    // A second gateway over the same directory reuses the entry even if the
    // backend would now answer differently.
    auto changed = make_mock({{{"ping"}, "different", std::nullopt, 0, 0}});
    Gateway gw2(changed, cfg);
    CHECK(gw2.generate(req("ping")).text == "different");  // different backend id, fresh key

    Gateway gw3(backend, cfg);
    CHECK(gw3.generate(req("ping")).text == "pong");
    CHECK(gw3.generate(req("ping")).cached);
}

TEST_CASE("nonzero temperature bypasses the cache") {
    auto dir = testutil::fresh_dir("gwcache_temp");
    auto backend = make_mock({{{"ping"}, "pong-a", std::nullopt, 1, 0},
                              {{"ping"}, "pong-b", std::nullopt, 0, 0}});
    GatewayConfig cfg;
    cfg.cache_dir = dir / "cache";
    Gateway gw(backend, cfg);
    CHECK(gw.generate(req("ping", 0.5)).text == "pong-a");
    auto second = gw.generate(req("ping", 0.5));
    CHECK(second.text == "pong-b");
    CHECK_FALSE(second.cached);
}

TEST_CASE("cache key covers the generation parameters") {
    auto dir = testutil::fresh_dir("gwcache_params");
    auto backend = make_mock({{{"ping"}, "first", std::nullopt, 1, 0},
                              {{"ping"}, "second", std::nullopt, 0, 0}});
    GatewayConfig cfg;
    cfg.cache_dir = dir / "cache";
    Gateway gw(backend, cfg);
    GenerationRequest a = req("ping");
    a.max_new_tokens = 16;
    GenerationRequest b = req("ping");
    b.max_new_tokens = 32;
    CHECK(gw.generate(a).text == "first");
    CHECK(gw.generate(b).text == "second");
}

TEST_CASE("transport failures are retried with backoff") {
    GatewayConfig cfg;
    cfg.retry_attempts = 3;
    cfg.retry_base_delay = std::chrono::milliseconds(1);

    auto flaky = make_mock({{{"ping"}, "pong", std::nullopt, 0, 2}});
    Gateway gw(flaky, cfg);
    CHECK(gw.generate(req("ping")).text == "pong");

    auto dead = make_mock({{{"ping"}, "pong", std::nullopt, 0, 3}});
    Gateway gw2(dead, cfg);
    CHECK_THROWS_WITH_AS(gw2.generate(req("ping")), doctest::Contains("after 3 attempts"),
                         GatewayError);
}

TEST_CASE("times-limited rules fall through to later rules") {
    auto backend = make_mock({{{"ping"}, "one", std::nullopt, 1, 0},
                              {{"ping"}, "two", std::nullopt, 1, 0},
                              {{"ping"}, "rest", std::nullopt, 0, 0}});
    Gateway gw(backend, {});
    CHECK(gw.generate(req("ping")).text == "one");
    CHECK(gw.generate(req("ping")).text == "two");
    CHECK(gw.generate(req("ping")).text == "rest");
    CHECK(gw.generate(req("ping")).text == "rest");
}

namespace {

class CountingBackend : public Backend {
  public:
    std::string id() const override { return "counting"; }
    BackendResult generate(const GenerationRequest& r) override {
        int now = ++inflight_;
        int seen = peak_.load();
        while (now > seen && !peak_.compare_exchange_weak(seen, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(3));
        --inflight_;
        return {"echo:" + r.prompt, std::nullopt};
    }
    int peak() const { return peak_.load(); }

  private:
    std::atomic<int> inflight_{0};
    std::atomic<int> peak_{0};
};

}  // namespace

TEST_CASE("generate_batch bounds concurrency and preserves order") {
    auto backend = std::make_shared<CountingBackend>();
    GatewayConfig cfg;
    cfg.max_parallel = 3;
    Gateway gw(backend, cfg);

    std::vector<GenerationRequest> reqs;
    for (int i = 0; i < 16; ++i) reqs.push_back(req("r" + std::to_string(i)));
    auto results = gw.generate_batch(reqs);
    REQUIRE(results.size() == 16);
    for (int i = 0; i < 16; ++i) CHECK(results[i].text == "echo:r" + std::to_string(i));
    CHECK(backend->peak() <= 3);
    CHECK(backend->peak() >= 1);
}

TEST_CASE("generate_batch keeps order under jittered completion") {
    MockConfig cfg;
    cfg.delay_jitter_ms = 5;
    std::vector<MockRule> rules;
    for (int i = 0; i < 12; ++i) {
        rules.push_back({{"item " + std::to_string(i) + " end"},
                         "resp" + std::to_string(i),
                         std::nullopt,
                         0,
                         0});
    }
    Gateway gw(make_mock(std::move(rules), cfg), {});
    std::vector<GenerationRequest> reqs;
    for (int i = 0; i < 12; ++i) reqs.push_back(req("item " + std::to_string(i) + " end"));
    auto results = gw.generate_batch(reqs);
    for (int i = 0; i < 12; ++i) CHECK(results[i].text == "resp" + std::to_string(i));
}

TEST_CASE("generate_batch rethrows the first failure") {
    auto backend = make_mock({{{"good"}, "fine", std::nullopt, 0, 0}});
    Gateway gw(backend, {});
    std::vector<GenerationRequest> reqs = {req("good"), req("no rule for this")};
    CHECK_THROWS_AS(gw.generate_batch(reqs), GatewayError);
}

TEST_CASE("mock embeddings are unit-length and deterministic") {
    MockConfig cfg;
    cfg.embedding_dim = 8;
    auto backend = make_mock({}, cfg);
    Gateway gw(backend, {});
    auto v1 = gw.embed("some words here");
    auto v2 = gw.embed("some words here");
    REQUIRE(v1.size() == 8);
    CHECK(v1 == v2);
    double norm = 0.0;
    for (double x : v1) norm += x * x;
    CHECK(norm == doctest::Approx(1.0));
    CHECK(gw.embed("other words") != v1);
    CHECK(gw.supports_embedding());
}

TEST_CASE("backends without a capability refuse politely") {
    auto backend = make_mock({});
    Gateway gw(backend, {});
    CHECK_FALSE(gw.supports_scoring());
    CHECK_FALSE(gw.supports_embedding());
    CHECK_THROWS_AS(gw.score_response("p", "r"), CapabilityError);
    CHECK_THROWS_AS(gw.embed("p"), CapabilityError);
}

TEST_CASE("script files load with config and distinct ids") {
    auto dir = testutil::fresh_dir("gwscript");
    testutil::write_script(dir / "a.jsonl",
                           {json{{"config", json{{"uniform_vocab", 10}}}},
                            json{{"match", json::array({"hello"})}, {"response", "world"}}});
    testutil::write_script(dir / "b.jsonl",
                           {json{{"match", json::array({"hello"})}, {"response", "mars"}}});
    auto a = MockBackend::from_script(dir / "a.jsonl");
    auto b = MockBackend::from_script(dir / "b.jsonl");
    CHECK(a->id() != b->id());
    CHECK(a->id().rfind("mock:", 0) == 0);
    Gateway gw(a, {});
    CHECK(gw.generate(req("well hello there")).text == "world");
    CHECK(gw.score_response("p", "one two") == doctest::Approx(std::log(0.1) ));
}

TEST_CASE("make_backend rejects unknown specs") {
    CHECK_THROWS_WITH_AS(make_backend("ftp://nope", "m", "ENV"),
                         doctest::Contains("unknown backend spec"), PreconditionError);
}
