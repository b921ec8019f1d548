#include "kcp/probe.hpp"

#include "kcp/prompts.hpp"
#include "kcp/text.hpp"

namespace kcp {

ParameterAnswer probe_question(const QuestionRecord& question, Gateway& gateway,
                               const ProbeOptions& options) {
    std::string prompt = prompts::parameter_answer(question.title, question.question);

    GenerationRequest req;
    req.prompt = prompt;
    req.temperature = 0.0;
    req.max_new_tokens = options.max_new_tokens;
    req.request_tag = "probe:" + question.question_id;
    ScoredResponse res = gateway.generate(req);

    ParameterAnswer out;
    out.question_id = question.question_id;
    out.raw_response = res.text;

    std::string answer = trim(res.text);
    if (prompts::is_refusal(answer) || normalize_answer(answer).empty()) {
        out.abstained = true;
        return out;
    }
    out.alpha_text = answer;

    if (options.score_prior && gateway.supports_scoring()) {
        const std::string& conditioning =
            options.prior_on_bare_question ? question.question : prompt;
        out.prior_logprob = gateway.score_response(conditioning, out.alpha_text);
    }
    return out;
}

void to_json(json& j, const ParameterAnswer& a) {
    j = json{{"question_id", a.question_id},
             {"alpha_text", a.alpha_text},
             {"abstained", a.abstained},
             {"raw_response", a.raw_response}};
    if (a.prior_logprob) j["prior_logprob"] = *a.prior_logprob;
}

void from_json(const json& j, ParameterAnswer& a) {
    a.question_id = j.at("question_id").get<std::string>();
    a.alpha_text = j.value("alpha_text", "");
    a.abstained = j.value("abstained", false);
    a.raw_response = j.value("raw_response", "");
    if (j.contains("prior_logprob") && !j["prior_logprob"].is_null()) {
        a.prior_logprob = j["prior_logprob"].get<double>();
    } else {
        a.prior_logprob.reset();
    }
}

}  // namespace kcp
