#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kcp/corpus.hpp"
#include "kcp/gateway.hpp"
#include "kcp/probe.hpp"

namespace kcp {

enum class ConflictKind { realistic, counterfactual };

struct ConflictAudit {
    std::string prompt;
    std::string raw_response;
    std::vector<std::string> rejected_candidates;
};

struct ConflictAnswer {
    std::string question_id;
    std::string text;  // never empty
    ConflictKind kind;
    // The alpha this answer was checked against ("" when the probe
    // abstained).
    std::string alpha_ref;
    // The realistic answer interpolated into the generator prompt; equals
    // text for realistic conflicts.
    std::string source_real;
    std::optional<ConflictAudit> audit;  // counterfactual kind only
};

struct ForgeOptions {
    int candidate_retries = 5;
    // Retry temperatures step linearly from 0 up to this ceiling.
    double temperature_max = 0.7;
    int max_new_tokens = 64;
};

// Picks the conflicting answer for one question. A realistic answer that
// already disagrees with alpha is preferred (first one in corpus order
// wins); only when every realistic answer agrees with alpha is a
// counterfactual generated and validated. Conflict means normalized
// inequality with alpha, nothing about factual correctness.
ConflictAnswer forge_conflict(const QuestionRecord& question, const ParameterAnswer& alpha,
                              Gateway& gateway, const ForgeOptions& options = {});

// Always fabricates a counterfactual, even when a realistic answer already
// disagrees with alpha; candidates matching alpha or any realistic answer
// are rejected. Used directly in emit-both mode.
ConflictAnswer forge_counterfactual(const QuestionRecord& question, const ParameterAnswer& alpha,
                                    Gateway& gateway, const ForgeOptions& options = {});

// One generation attempt; exposed separately so tests can drive it.
std::string generate_counterfactual(const QuestionRecord& question, const std::string& a_real,
                                    Gateway& gateway, double temperature, int max_new_tokens);

void to_json(json& j, const ConflictAnswer& c);
void from_json(const json& j, ConflictAnswer& c);

}  // namespace kcp
