#include "kcp/conflict.hpp"

#include "kcp/errors.hpp"
#include "kcp/prompts.hpp"
#include "kcp/text.hpp"

namespace kcp {

namespace {

// Models tend to echo the "Fake answer:" lead-in from the few-shot block;
// peel it off and keep the first line only.
std::string clean_candidate(const std::string& raw) {
    std::string s = trim(raw);
    std::size_t nl = s.find('\n');
    if (nl != std::string::npos) s = trim(s.substr(0, nl));
    std::string lowered = to_lower(s);
    const std::string prefix = "fake answer:";
    if (lowered.rfind(prefix, 0) == 0) s = trim(s.substr(prefix.size()));
    if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                          (s.front() == '\'' && s.back() == '\''))) {
        s = trim(s.substr(1, s.size() - 2));
    }
    return s;
}

}  // namespace

std::string generate_counterfactual(const QuestionRecord& question, const std::string& a_real,
                                    Gateway& gateway, double temperature, int max_new_tokens) {
    GenerationRequest req;
    req.prompt = prompts::counterfactual(question.question, a_real);
    req.temperature = temperature;
    req.max_new_tokens = max_new_tokens;
    req.stop_sequences = {"\nQuestion:"};
    req.request_tag = "counterfactual:" + question.question_id;
    return gateway.generate(req).text;
}

ConflictAnswer forge_conflict(const QuestionRecord& question, const ParameterAnswer& alpha,
                              Gateway& gateway, const ForgeOptions& options) {
    if (question.realistic_answers.empty()) {
        throw PreconditionError("forge_conflict: question " + question.question_id +
                                " has no realistic answers");
    }

    std::string alpha_norm = alpha.abstained ? std::string{} : normalize_answer(alpha.alpha_text);

    // Realistic answers that already disagree with alpha conflict for free;
    // an abstained probe cannot agree with anything.
    for (const std::string& a : question.realistic_answers) {
        if (normalize_answer(a).empty()) continue;
        if (alpha.abstained || normalize_answer(a) != alpha_norm) {
            ConflictAnswer out;
            out.question_id = question.question_id;
            out.text = a;
            out.kind = ConflictKind::realistic;
            out.alpha_ref = alpha.abstained ? "" : alpha.alpha_text;
            out.source_real = a;
            return out;
        }
    }

    // Every usable realistic answer matches alpha; fabricate one.
    return forge_counterfactual(question, alpha, gateway, options);
}

ConflictAnswer forge_counterfactual(const QuestionRecord& question, const ParameterAnswer& alpha,
                                    Gateway& gateway, const ForgeOptions& options) {
    std::string alpha_norm = alpha.abstained ? std::string{} : normalize_answer(alpha.alpha_text);
    std::string primary;
    for (const std::string& a : question.realistic_answers) {
        if (!normalize_answer(a).empty()) {
            primary = a;
            break;
        }
    }
    if (primary.empty()) {
        throw GenerationRejectedError("forge_conflict: question " + question.question_id +
                                      " has only empty realistic answers");
    }

    int attempts = options.candidate_retries > 0 ? options.candidate_retries : 1;
    std::vector<std::string> rejected;
    std::string last_raw;
    for (int i = 0; i < attempts; ++i) {
        double temperature =
            attempts == 1 ? 0.0
                          : options.temperature_max * static_cast<double>(i) /
                                static_cast<double>(attempts - 1);
        last_raw = generate_counterfactual(question, primary, gateway, temperature,
                                           options.max_new_tokens);
        std::string candidate = clean_candidate(last_raw);
        std::string cand_norm = normalize_answer(candidate);

        bool valid = !cand_norm.empty() && cand_norm != alpha_norm;
        if (valid) {
            for (const std::string& a : question.realistic_answers) {
                if (normalize_answer(a) == cand_norm) {
                    valid = false;
                    break;
                }
            }
        }
        if (valid) {
            ConflictAnswer out;
            out.question_id = question.question_id;
            out.text = candidate;
            out.kind = ConflictKind::counterfactual;
            out.alpha_ref = alpha.abstained ? "" : alpha.alpha_text;
            out.source_real = primary;
            out.audit = ConflictAudit{prompts::counterfactual(question.question, primary),
                                      last_raw, rejected};
            return out;
        }
        rejected.push_back(candidate);
    }

    std::string joined;
    for (const std::string& r : rejected) {
        if (!joined.empty()) joined += " | ";
        joined += r.empty() ? "<empty>" : r;
    }
    throw GenerationRejectedError("forge_conflict: question " + question.question_id + ": all " +
                                  std::to_string(attempts) +
                                  " counterfactual candidates rejected: " + joined);
}

void to_json(json& j, const ConflictAnswer& c) {
    j = json{{"question_id", c.question_id},
             {"text", c.text},
             {"kind", c.kind == ConflictKind::realistic ? "realistic" : "counterfactual"},
             {"alpha_ref", c.alpha_ref},
             {"source_real", c.source_real}};
    if (c.audit) {
        j["audit"] = json{{"prompt", c.audit->prompt},
                          {"raw_response", c.audit->raw_response},
                          {"rejected_candidates", c.audit->rejected_candidates}};
    }
}

void from_json(const json& j, ConflictAnswer& c) {
    c.question_id = j.at("question_id").get<std::string>();
    c.text = j.at("text").get<std::string>();
    c.kind = j.value("kind", "realistic") == "counterfactual" ? ConflictKind::counterfactual
                                                              : ConflictKind::realistic;
    c.alpha_ref = j.value("alpha_ref", "");
    c.source_real = j.value("source_real", "");
    if (j.contains("audit")) {
        ConflictAudit a;
        a.prompt = j["audit"].value("prompt", "");
        a.raw_response = j["audit"].value("raw_response", "");
        a.rejected_candidates =
            j["audit"].value("rejected_candidates", std::vector<std::string>{});
        c.audit = std::move(a);
    } else {
        c.audit.reset();
    }
}

}  // namespace kcp
