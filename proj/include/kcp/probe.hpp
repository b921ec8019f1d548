#pragma once

#include <optional>
#include <string>

#include "kcp/corpus.hpp"
#include "kcp/gateway.hpp"

namespace kcp {

struct ParameterAnswer {
    std::string question_id;
    // The model's own answer, whitespace-trimmed but otherwise verbatim.
    // Empty iff abstained.
    std::string alpha_text;
    bool abstained = false;
    std::string raw_response;
    // Mean token log-probability of alpha under the probe prompt; present
    // when the backend supports scoring and scoring was requested.
    std::optional<double> prior_logprob;
};

struct ProbeOptions {
    bool score_prior = true;
    // When false (default) the prior conditions on the full probe prompt;
    // when true it conditions on the bare question text.
    bool prior_on_bare_question = false;
    int max_new_tokens = 256;
};

// Closed-book probe at temperature 0. Refusals are detected by the phrase
// list in prompts::refusal_phrases(); responses whose normalized form is
// empty are treated as abstentions too, so every non-abstained alpha
// survives normalization non-empty.
ParameterAnswer probe_question(const QuestionRecord& question, Gateway& gateway,
                               const ProbeOptions& options = {});

void to_json(json& j, const ParameterAnswer& a);
void from_json(const json& j, ParameterAnswer& a);

}  // namespace kcp
