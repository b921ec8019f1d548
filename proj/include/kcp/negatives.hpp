#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kcp/context.hpp"
#include "kcp/gateway.hpp"
#include "kcp/probe.hpp"

namespace kcp {

enum class NegErrorType { overinclusion, ignorance };

struct NegativeAudit {
    std::string prompt;
    std::string raw_response;
    std::vector<std::string> rejected_candidates;
};

struct NegativeSample {
    std::string question_id;
    std::string context_ref;  // context_id the sample was drawn against
    NegErrorType error_type;
    std::string answer_text;
    std::optional<NegativeAudit> audit;  // overinclusion only
};

struct NegativeOptions {
    int candidate_retries = 5;
    double temperature_max = 0.7;
    int max_new_tokens = 64;
};

// Asks the backend for an answer that appears verbatim in the context but
// differs from the potential answer (the conflict answer for conflicting
// contexts, alpha for irrelevant ones). Containment is checked
// case-insensitively against the raw serialized context; inequality is
// checked on normalized forms. Candidates failing either check are
// rejected and retried with stepped temperature.
NegativeSample sample_overinclusion(const QuestionRecord& question, const ContextPackage& context,
                                    const std::string& potential_answer, Gateway& gateway,
                                    const NegativeOptions& options = {});

// The ignorance error is alpha itself offered against a conflicting
// context; no model call involved. Returns nullopt when the probe
// abstained (callers count these skips).
std::optional<NegativeSample> sample_ignorance(const QuestionRecord& question,
                                               const ContextPackage& context,
                                               const ParameterAnswer& alpha);

std::string to_string(NegErrorType t);

void to_json(json& j, const NegativeSample& n);
void from_json(const json& j, NegativeSample& n);

}  // namespace kcp
