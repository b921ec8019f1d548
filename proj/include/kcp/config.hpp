#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kcp/jsonl.hpp"

namespace kcp {

// Everything a run needs, with usable defaults. Values come from three
// layers, later wins: built-in defaults, a key=value config file, CLI
// flags.
struct RunConfig {
    std::filesystem::path corpus_path = "corpus.jsonl";
    std::string corpus_format = "generic_qa";  // or "squad_v2"
    std::filesystem::path out_dir = "out";
    std::uint64_t seed = 17;

    std::size_t k_docs = 4;
    double r_error = 1.0;
    // Questions eligible for both regimes land in the conflicting one with
    // this probability (seeded per question).
    double conflicting_fraction = 0.6;
    bool emit_both_conflicts = false;

    std::string backend = "mock:mock_script.jsonl";
    std::string backend_probe;  // per-stage overrides, empty = use `backend`
    std::string backend_forge;
    std::string backend_negatives;
    std::string backend_eval;
    std::string backend_leakage;
    std::string backend_auth_env = "KCP_API_TOKEN";
    std::string backend_model = "default";

    std::size_t parallelism = 4;
    std::size_t retry_attempts = 3;
    std::size_t candidate_retries = 5;
    double temperature_max = 0.7;
    std::size_t max_new_tokens = 256;
    std::filesystem::path cache_dir;  // default: <out_dir>/cache

    bool score_prior = true;
    std::string prior_prompt = "b1";  // or "bare"
    bool hard_fallback = false;
    std::string easy_doc_mode = "random_seeded";  // or "least_similar"
    std::string similarity = "term_overlap";      // or "embedding"

    double length_tolerance = 0.05;
    double quarantine_threshold = 0.20;
    std::size_t bootstrap_repeats = 1000;
    std::size_t prior_bins = 5;
    std::vector<std::string> export_formats = {"dpo_pairs", "sft_chat"};
    std::vector<double> sweep_targets = {0.2, 0.3, 0.5, 1, 2, 3, 5};

    std::filesystem::path effective_cache_dir() const {
        return cache_dir.empty() ? out_dir / "cache" : cache_dir;
    }
    std::string backend_for(const std::string& stage) const;
};

// Parses `key = value` lines; '#' starts a comment, blank lines are
// skipped. Unknown keys are an error so typos do not silently fall back
// to defaults.
RunConfig load_config_file(const std::filesystem::path& path, RunConfig base = {});
void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value);

json config_to_json(const RunConfig& cfg);

}  // namespace kcp
