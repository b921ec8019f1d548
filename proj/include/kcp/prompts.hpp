#pragma once

#include <string>
#include <vector>

namespace kcp::prompts {

// Every prompt the pipeline sends is rendered here and nowhere else, so the
// exact wording is pinned in one place and tests can freeze it.

// Closed-book probe for the model's own (parametric) answer.
std::string parameter_answer(const std::string& title, const std::string& question);

// Few-shot counterfactual-answer generator.
std::string counterfactual(const std::string& question, const std::string& a_real);

// Closed-book re-probe used when checking for ignorance-style behavior and
// for the leakage audit; same wording as parameter_answer.
std::string contextual_ignorance(const std::string& title, const std::string& question);

// Asks for an alternative answer drawn verbatim from the context.
std::string contextual_overinclusion(const std::string& question, const std::string& potential_answer,
                                     const std::string& context);

// Instruction wrapper used for every training prompt and for live
// evaluation generation.
std::string rag_instruction(const std::string& context, const std::string& question);

const std::vector<std::string>& refusal_phrases();
bool is_refusal(const std::string& response);

}  // namespace kcp::prompts
