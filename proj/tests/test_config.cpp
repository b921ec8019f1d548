#include <string>

#include "doctest.h"
#include "kcp/config.hpp"
#include "kcp/errors.hpp"
#include "kcp/jsonl.hpp"
#include "testutil.hpp"

using namespace kcp;

TEST_CASE("defaults are sane") {
    RunConfig cfg;
    CHECK(cfg.k_docs == 4);
    CHECK(cfg.r_error == doctest::Approx(1.0));
    CHECK(cfg.seed == 17);
    CHECK(cfg.conflicting_fraction == doctest::Approx(0.6));
    CHECK(cfg.quarantine_threshold == doctest::Approx(0.20));
    CHECK(cfg.effective_cache_dir() == cfg.out_dir / "cache");
    CHECK(cfg.backend_for("probe") == cfg.backend);
    CHECK(cfg.export_formats.size() == 2);
    CHECK(cfg.sweep_targets.size() == 7);
}

TEST_CASE("config files parse comments, blanks, and typed values") {
    auto dir = testutil::fresh_dir("config_parse");
    kcp::write_file(dir / "run.conf",
                    "# a comment line\n"
                    "seed = 99\n"
                    "\n"
                    "k_docs=6\n"
                    "r_error = 2.5   # trailing comment\n"
                    "emit_both_conflicts = true\n"
                    "hard_fallback = 1\n"
                    "backend = mock:other.jsonl\n"
                    "backend.forge = mock:forge.jsonl\n"
                    "export_formats = dpo_pairs\n"
                    "sweep_targets = 0.5, 1, 2\n"
                    "easy_doc_mode = least_similar\n"
                    "cache_dir = /tmp/shared_cache\n");
    RunConfig cfg = load_config_file(dir / "run.conf");
    CHECK(cfg.seed == 99);
    CHECK(cfg.k_docs == 6);
    CHECK(cfg.r_error == doctest::Approx(2.5));
    CHECK(cfg.emit_both_conflicts);
    CHECK(cfg.hard_fallback);
    CHECK(cfg.backend == "mock:other.jsonl");
    CHECK(cfg.backend_for("forge") == "mock:forge.jsonl");
    CHECK(cfg.backend_for("probe") == "mock:other.jsonl");
    CHECK(cfg.export_formats == std::vector<std::string>{"dpo_pairs"});
    REQUIRE(cfg.sweep_targets.size() == 3);
    CHECK(cfg.sweep_targets[0] == doctest::Approx(0.5));
    CHECK(cfg.easy_doc_mode == "least_similar");
    CHECK(cfg.effective_cache_dir() == std::filesystem::path("/tmp/shared_cache"));
}

TEST_CASE("unknown keys and bad values are reported with file and line") {
    auto dir = testutil::fresh_dir("config_bad");
    kcp::write_file(dir / "bad.conf", "seed = 1\nnot_a_key = 2\n");
    CHECK_THROWS_WITH_AS(load_config_file(dir / "bad.conf"), doctest::Contains(":2:"),
                         ValidationError);

    kcp::write_file(dir / "noval.conf", "just a bare line\n");
    CHECK_THROWS_AS(load_config_file(dir / "noval.conf"), ValidationError);

    RunConfig cfg;
    CHECK_THROWS_AS(apply_config_line(cfg, "seed", "abc"), ValidationError);
    CHECK_THROWS_AS(apply_config_line(cfg, "emit_both_conflicts", "maybe"), ValidationError);
    CHECK_THROWS_AS(apply_config_line(cfg, "prior_prompt", "b2"), ValidationError);
    CHECK_THROWS_AS(apply_config_line(cfg, "similarity", "cosine"), ValidationError);
    CHECK_THROWS_AS(apply_config_line(cfg, "easy_doc_mode", "hardest"), ValidationError);
}

TEST_CASE("config serialization reflects the effective cache dir") {
    RunConfig cfg;
    cfg.out_dir = "/data/run7";
    json j = config_to_json(cfg);
    CHECK(j.at("cache_dir") == "/data/run7/cache");
    CHECK(j.at("seed") == 17);
    CHECK(j.at("backend_overrides").at("probe") == "");
    // Credentials never serialize; only the env var *name* appears.
    CHECK(j.at("backend_auth_env") == "KCP_API_TOKEN");
}
