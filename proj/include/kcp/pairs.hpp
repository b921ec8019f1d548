#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kcp/conflict.hpp"
#include "kcp/context.hpp"
#include "kcp/negatives.hpp"
#include "kcp/probe.hpp"

namespace kcp {

enum class ResponseTemplate { adherent, robust };

// The two fixed response formats; cores are interpolated verbatim.
extern const char* const kAdherentTemplatePrefix;
extern const char* const kRobustTemplatePrefix;

struct RenderedResponse {
    std::string text;
    ResponseTemplate tmpl;
    std::string answer_core;
    std::size_t token_length = 0;  // whitespace tokens of text
};

// render(core, adherent) -> "Based on supplemental knowledge and my own
// understanding, the answer to this question is that {core}". Distinct
// cores always render to distinct texts. Throws on empty core.
RenderedResponse render_response(const std::string& answer_core, ResponseTemplate tmpl);

enum class PairType { cf_overinclusion, cf_ignorance, ir_overinclusion };

struct PreferencePair {
    std::string question_id;
    std::string context_ref;
    std::string prompt;  // identical for chosen and rejected
    RenderedResponse chosen;
    RenderedResponse rejected;
    PairType pair_type;
};

struct SFTExample {
    std::string question_id;
    std::string context_ref;
    std::string prompt;
    RenderedResponse target;
};

struct BalanceReport {
    double mean_len_win = 0.0;
    double mean_len_loss = 0.0;
    bool length_flagged = false;
    double length_tolerance = 0.05;
    // count(cf_ignorance) / count(ir_overinclusion) after downsampling;
    // absent when either class is absent by construction (e.g. empty
    // input).
    std::optional<double> realized_ratio;
    double target_ratio = 1.0;
    std::map<std::string, std::size_t> counts;            // final, per pair type
    std::map<std::string, std::size_t> candidate_counts;  // before downsampling
    std::size_t skipped_degenerate = 0;  // chosen == rejected guards
};

struct AssembleInputs {
    std::vector<const QuestionRecord*> questions;
    std::vector<ContextPackage> contexts;
    std::vector<NegativeSample> negatives;
    // Keyed by context_id: a question may carry several conflicting
    // contexts (emit-both mode), each with its own conflict answer.
    std::map<std::string, ConflictAnswer> conflicts_by_ctx;
    std::map<std::string, ParameterAnswer> alphas_by_qid;
};

struct AssembleConfig {
    double r_error_target = 1.0;
    std::uint64_t seed = 17;
    double length_tolerance = 0.05;
};

struct AssembleResult {
    std::vector<PreferencePair> pairs;
    std::vector<SFTExample> sft;
    BalanceReport report;
};

// Builds the three pair families, sorts deterministically by
// (question_id, pair_type), then downsamples cf_ignorance /
// ir_overinclusion (never upsamples) so the realized ratio matches the
// target within integer rounding. Throws RatioUnreachableError naming the
// achievable bound when the target cannot be realized.
AssembleResult assemble_pairs(const AssembleInputs& inputs, const AssembleConfig& config);

// Recomputes win/loss mean whitespace-token lengths and flags the set when
// the relative difference exceeds the tolerance.
BalanceReport check_length_alignment(const std::vector<PreferencePair>& pairs, double tolerance);

struct ExportPaths {
    std::filesystem::path dpo_pairs;
    std::filesystem::path sft_chat;
    std::filesystem::path trainer_config;
    std::filesystem::path manifest;
};

// Writes dpo_pairs.jsonl / sft_chat.jsonl / trainer_config.txt /
// manifest.json into dir. Writes are staged through temp files; on failure
// nothing half-written is left behind. extra_manifest is merged into the
// manifest (snapshot id, seeds, stage hashes).
ExportPaths export_training(const AssembleResult& result, const std::vector<std::string>& formats,
                            const std::filesystem::path& dir, const json& extra_manifest);

std::string to_string(PairType t);
PairType pair_type_from_string(const std::string& s);

void to_json(json& j, const PreferencePair& p);
void to_json(json& j, const SFTExample& e);
void to_json(json& j, const BalanceReport& r);
void from_json(const json& j, BalanceReport& r);

}  // namespace kcp
