#include "kcp/negatives.hpp"

#include "kcp/errors.hpp"
#include "kcp/prompts.hpp"
#include "kcp/text.hpp"

namespace kcp {

namespace {

std::string clean_candidate(const std::string& raw) {
    std::string s = trim(raw);
    std::size_t nl = s.find('\n');
    if (nl != std::string::npos) s = trim(s.substr(0, nl));
    std::string lowered = to_lower(s);
    for (const char* prefix : {"answer:", "alternative answer:"}) {
        if (lowered.rfind(prefix, 0) == 0) {
            s = trim(s.substr(std::string(prefix).size()));
            break;
        }
    }
    if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                          (s.front() == '\'' && s.back() == '\''))) {
        s = trim(s.substr(1, s.size() - 2));
    }
    return s;
}

// Strip trailing sentence punctuation, for a second containment attempt
// when the model appends a period the context does not have.
std::string strip_terminal(const std::string& s) {
    std::size_t e = s.size();
    while (e > 0) {
        char c = s[e - 1];
        if (c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':') {
            --e;
        } else {
            break;
        }
    }
    return trim(s.substr(0, e));
}

}  // namespace

NegativeSample sample_overinclusion(const QuestionRecord& question, const ContextPackage& context,
                                    const std::string& potential_answer, Gateway& gateway,
                                    const NegativeOptions& options) {
    if (potential_answer.empty()) {
        throw PreconditionError("sample_overinclusion: empty potential answer for " +
                                question.question_id);
    }
    std::string serialized = serialize_context(context.docs);
    std::string prompt =
        prompts::contextual_overinclusion(question.question, potential_answer, serialized);
    std::string potential_norm = normalize_answer(potential_answer);

    int attempts = options.candidate_retries > 0 ? options.candidate_retries : 1;
    std::vector<std::string> rejected;
    std::string last_raw;
    for (int i = 0; i < attempts; ++i) {
        GenerationRequest req;
        req.prompt = prompt;
        req.temperature = attempts == 1 ? 0.0
                                        : options.temperature_max * static_cast<double>(i) /
                                              static_cast<double>(attempts - 1);
        req.max_new_tokens = options.max_new_tokens;
        req.request_tag = "overinclusion:" + context.context_id;
        last_raw = gateway.generate(req).text;

        std::string candidate = clean_candidate(last_raw);
        if (!candidate.empty() && !ci_contains(serialized, candidate)) {
            std::string bare = strip_terminal(candidate);
            if (!bare.empty() && ci_contains(serialized, bare)) candidate = bare;
        }
        bool valid = !candidate.empty() && !normalize_answer(candidate).empty() &&
                     ci_contains(serialized, candidate) &&
                     normalize_answer(candidate) != potential_norm;
        if (valid) {
            NegativeSample out;
            out.question_id = question.question_id;
            out.context_ref = context.context_id;
            out.error_type = NegErrorType::overinclusion;
            out.answer_text = candidate;
            out.audit = NegativeAudit{prompt, last_raw, rejected};
            return out;
        }
        rejected.push_back(candidate);
    }

    std::string joined;
    for (const std::string& r : rejected) {
        if (!joined.empty()) joined += " | ";
        joined += r.empty() ? "<empty>" : r;
    }
    throw GenerationRejectedError("sample_overinclusion: " + context.context_id + ": all " +
                                  std::to_string(attempts) +
                                  " candidates rejected (not in context or equal to the "
                                  "potential answer): " +
                                  joined);
}

std::optional<NegativeSample> sample_ignorance(const QuestionRecord& question,
                                               const ContextPackage& context,
                                               const ParameterAnswer& alpha) {
    if (context.kind != ContextKind::conflicting) {
        throw PreconditionError("sample_ignorance: context " + context.context_id +
                                " is not conflicting");
    }
    if (alpha.abstained) return std::nullopt;
    NegativeSample out;
    out.question_id = question.question_id;
    out.context_ref = context.context_id;
    out.error_type = NegErrorType::ignorance;
    out.answer_text = alpha.alpha_text;
    return out;
}

std::string to_string(NegErrorType t) {
    return t == NegErrorType::overinclusion ? "overinclusion" : "ignorance";
}

void to_json(json& j, const NegativeSample& n) {
    j = json{{"question_id", n.question_id},
             {"context_ref", n.context_ref},
             {"error_type", to_string(n.error_type)},
             {"answer_text", n.answer_text}};
    if (n.audit) {
        j["audit"] = json{{"prompt", n.audit->prompt},
                          {"raw_response", n.audit->raw_response},
                          {"rejected_candidates", n.audit->rejected_candidates}};
    }
}

void from_json(const json& j, NegativeSample& n) {
    n.question_id = j.at("question_id").get<std::string>();
    n.context_ref = j.at("context_ref").get<std::string>();
    n.error_type = j.value("error_type", "overinclusion") == "ignorance"
                       ? NegErrorType::ignorance
                       : NegErrorType::overinclusion;
    n.answer_text = j.at("answer_text").get<std::string>();
    if (j.contains("audit")) {
        NegativeAudit a;
        a.prompt = j["audit"].value("prompt", "");
        a.raw_response = j["audit"].value("raw_response", "");
        a.rejected_candidates =
            j["audit"].value("rejected_candidates", std::vector<std::string>{});
        n.audit = std::move(a);
    } else {
        n.audit.reset();
    }
}

}  // namespace kcp
