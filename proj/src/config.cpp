#include "kcp/config.hpp"

#include <sstream>

#include "kcp/errors.hpp"
#include "kcp/text.hpp"

namespace kcp {

std::string RunConfig::backend_for(const std::string& stage) const {
    if (stage == "probe" && !backend_probe.empty()) return backend_probe;
    if (stage == "forge" && !backend_forge.empty()) return backend_forge;
    if (stage == "negatives" && !backend_negatives.empty()) return backend_negatives;
    if (stage == "eval" && !backend_eval.empty()) return backend_eval;
    if (stage == "leakage" && !backend_leakage.empty()) return backend_leakage;
    return backend;
}

namespace {

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ValidationError("config: " + key + " expects a boolean, got '" + value + "'");
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ValidationError("config: " + key + " expects a number, got '" + value + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        unsigned long long v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ValidationError("config: " + key + " expects an unsigned integer, got '" + value +
                              "'");
    }
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

}  // namespace

void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "corpus_path") cfg.corpus_path = value;
    else if (key == "corpus_format") cfg.corpus_format = value;
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "seed") cfg.seed = parse_u64(key, value);
    else if (key == "k_docs") cfg.k_docs = static_cast<std::size_t>(parse_u64(key, value));
    else if (key == "r_error") cfg.r_error = parse_double(key, value);
    else if (key == "conflicting_fraction") cfg.conflicting_fraction = parse_double(key, value);
    else if (key == "emit_both_conflicts") cfg.emit_both_conflicts = parse_bool(key, value);
    else if (key == "backend") cfg.backend = value;
    else if (key == "backend.probe") cfg.backend_probe = value;
    else if (key == "backend.forge") cfg.backend_forge = value;
    else if (key == "backend.negatives") cfg.backend_negatives = value;
    else if (key == "backend.eval") cfg.backend_eval = value;
    else if (key == "backend.leakage") cfg.backend_leakage = value;
    else if (key == "backend_auth_env") cfg.backend_auth_env = value;
    else if (key == "backend_model") cfg.backend_model = value;
    else if (key == "parallelism") cfg.parallelism = static_cast<std::size_t>(parse_u64(key, value));
    else if (key == "retry_attempts") cfg.retry_attempts = static_cast<std::size_t>(parse_u64(key, value));
    else if (key == "candidate_retries") cfg.candidate_retries = static_cast<std::size_t>(parse_u64(key, value));
    else if (key == "temperature_max") cfg.temperature_max = parse_double(key, value);
    else if (key == "max_new_tokens") cfg.max_new_tokens = static_cast<std::size_t>(parse_u64(key, value));
    else if (key == "cache_dir") cfg.cache_dir = value;
    else if (key == "score_prior") cfg.score_prior = parse_bool(key, value);
    else if (key == "prior_prompt") {
        if (value != "b1" && value != "bare") {
            throw ValidationError("config: prior_prompt must be 'b1' or 'bare'");
        }
        cfg.prior_prompt = value;
    } else if (key == "hard_fallback") cfg.hard_fallback = parse_bool(key, value);
    else if (key == "easy_doc_mode") {
        if (value != "random_seeded" && value != "least_similar") {
            throw ValidationError("config: easy_doc_mode must be 'random_seeded' or 'least_similar'");
        }
        cfg.easy_doc_mode = value;
    } else if (key == "similarity") {
        if (value != "term_overlap" && value != "embedding") {
            throw ValidationError("config: similarity must be 'term_overlap' or 'embedding'");
        }
        cfg.similarity = value;
    } else if (key == "length_tolerance") cfg.length_tolerance = parse_double(key, value);
    else if (key == "quarantine_threshold") cfg.quarantine_threshold = parse_double(key, value);
    else if (key == "bootstrap_repeats") cfg.bootstrap_repeats = static_cast<std::size_t>(parse_u64(key, value));
    else if (key == "prior_bins") cfg.prior_bins = static_cast<std::size_t>(parse_u64(key, value));
    else if (key == "export_formats") cfg.export_formats = split_list(value);
    else if (key == "sweep_targets") {
        cfg.sweep_targets.clear();
        for (const std::string& item : split_list(value)) {
            cfg.sweep_targets.push_back(parse_double(key, item));
        }
    } else {
        throw ValidationError("config: unknown key '" + key + "'");
    }
}

RunConfig load_config_file(const std::filesystem::path& path, RunConfig base) {
    std::string content = read_file(path);
    std::istringstream in(content);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ValidationError("config: " + path.string() + ":" + std::to_string(lineno) +
                                  ": expected key=value, got '" + line + "'");
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        try {
            apply_config_line(base, key, value);
        } catch (const ValidationError& e) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return base;
}

json config_to_json(const RunConfig& cfg) {
    json j;
    j["corpus_path"] = cfg.corpus_path.string();
    j["corpus_format"] = cfg.corpus_format;
    j["out_dir"] = cfg.out_dir.string();
    j["seed"] = cfg.seed;
    j["k_docs"] = cfg.k_docs;
    j["r_error"] = cfg.r_error;
    j["conflicting_fraction"] = cfg.conflicting_fraction;
    j["emit_both_conflicts"] = cfg.emit_both_conflicts;
    j["backend"] = cfg.backend;
    j["backend_overrides"] = json{{"probe", cfg.backend_probe},
                                  {"forge", cfg.backend_forge},
                                  {"negatives", cfg.backend_negatives},
                                  {"eval", cfg.backend_eval},
                                  {"leakage", cfg.backend_leakage}};
    j["backend_auth_env"] = cfg.backend_auth_env;
    j["backend_model"] = cfg.backend_model;
    j["parallelism"] = cfg.parallelism;
    j["retry_attempts"] = cfg.retry_attempts;
    j["candidate_retries"] = cfg.candidate_retries;
    j["temperature_max"] = cfg.temperature_max;
    j["max_new_tokens"] = cfg.max_new_tokens;
    j["cache_dir"] = cfg.effective_cache_dir().string();
    j["score_prior"] = cfg.score_prior;
    j["prior_prompt"] = cfg.prior_prompt;
    j["hard_fallback"] = cfg.hard_fallback;
    j["easy_doc_mode"] = cfg.easy_doc_mode;
    j["similarity"] = cfg.similarity;
    j["length_tolerance"] = cfg.length_tolerance;
    j["quarantine_threshold"] = cfg.quarantine_threshold;
    j["bootstrap_repeats"] = cfg.bootstrap_repeats;
    j["prior_bins"] = cfg.prior_bins;
    j["export_formats"] = cfg.export_formats;
    j["sweep_targets"] = cfg.sweep_targets;
    return j;
}

}  // namespace kcp
