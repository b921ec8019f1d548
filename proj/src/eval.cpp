#include "kcp/eval.hpp"

#include <algorithm>
#include <cmath>

#include "kcp/errors.hpp"
#include "kcp/prompts.hpp"
#include "kcp/rng.hpp"
#include "kcp/text.hpp"

namespace kcp {

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::adherent: return "adherent";
        case Verdict::robust: return "robust";
        default: return "wrong";
    }
}

Verdict verdict_from_string(const std::string& s) {
    if (s == "adherent") return Verdict::adherent;
    if (s == "robust") return Verdict::robust;
    if (s == "wrong") return Verdict::wrong;
    throw ValidationError("unknown verdict: " + s);
}

Judgment judge(const ModelOutput& output, ContextKind kind, const GoldSet& gold) {
    Judgment g;
    g.question_id = output.question_id;
    g.context_ref = output.context_ref;
    g.context_kind = kind;
    g.verdict = Verdict::wrong;

    if (kind == ContextKind::conflicting) {
        if (!gold.a_cf || gold.a_cf->empty()) {
            throw PreconditionError("judge: conflicting context for " + output.question_id +
                                    " has no conflict answer");
        }
        if (normalized_contains(output.response_text, *gold.a_cf)) {
            g.verdict = Verdict::adherent;
            g.matched_target = "conflict";
        } else if (gold.alpha && !gold.alpha->empty() &&
                   normalized_contains(output.response_text, *gold.alpha)) {
            g.verdict = Verdict::robust;
            g.matched_target = "alpha";
        }
    } else {
        if (!gold.alpha || gold.alpha->empty()) {
            throw PreconditionError("judge: irrelevant context for " + output.question_id +
                                    " has no parametric answer to match");
        }
        if (normalized_contains(output.response_text, *gold.alpha)) {
            g.verdict = Verdict::robust;
            g.matched_target = "alpha";
        }
    }
    return g;
}

namespace {

double bootstrap_std(const std::vector<int>& hits, std::size_t repeats, std::uint64_t seed) {
    SplitMix64 rng(seed);
    const std::size_t n = hits.size();
    std::vector<double> means;
    means.reserve(repeats);
    for (std::size_t r = 0; r < repeats; ++r) {
        std::uint64_t sum = 0;
        for (std::size_t i = 0; i < n; ++i) sum += static_cast<std::uint64_t>(hits[rng.below(n)]);
        means.push_back(static_cast<double>(sum) / static_cast<double>(n));
    }
    return mean_and_std(means).second;
}

}  // namespace

std::pair<double, double> mean_and_std(const std::vector<double>& xs) {
    if (xs.empty()) throw PreconditionError("mean_and_std: empty sample");
    double mean = 0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());
    return {mean, std::sqrt(var)};
}

MetricsReport aggregate(const std::vector<Judgment>& judgments, std::size_t bootstrap_repeats,
                        std::uint64_t seed) {
    if (judgments.empty()) throw PreconditionError("aggregate: no judgments");
    std::vector<int> cf_hits, ir_hits;
    for (const Judgment& g : judgments) {
        if (g.context_kind == ContextKind::conflicting) {
            cf_hits.push_back(g.verdict == Verdict::adherent ? 1 : 0);
        } else {
            ir_hits.push_back(g.verdict == Verdict::robust ? 1 : 0);
        }
    }

    MetricsReport report;
    report.n_conflicting = cf_hits.size();
    report.n_irrelevant = ir_hits.size();
    report.n_total = judgments.size();
    if (!cf_hits.empty()) {
        std::uint64_t s = 0;
        for (int h : cf_hits) s += static_cast<std::uint64_t>(h);
        report.r_ad = static_cast<double>(s) / static_cast<double>(cf_hits.size());
        if (bootstrap_repeats > 0) {
            report.r_ad_std = bootstrap_std(cf_hits, bootstrap_repeats, derive_seed(seed, "r_ad"));
        }
    }
    if (!ir_hits.empty()) {
        std::uint64_t s = 0;
        for (int h : ir_hits) s += static_cast<std::uint64_t>(h);
        report.r_ro = static_cast<double>(s) / static_cast<double>(ir_hits.size());
        if (bootstrap_repeats > 0) {
            report.r_ro_std = bootstrap_std(ir_hits, bootstrap_repeats, derive_seed(seed, "r_ro"));
        }
    }
    return report;
}

std::vector<PriorBin> prior_analysis(const std::vector<Judgment>& judgments,
                                     const std::map<std::string, double>& priors_by_qid,
                                     std::size_t bins) {
    if (bins < 1) throw PreconditionError("prior_analysis: bins must be >= 1");
    std::vector<std::pair<double, bool>> items;  // (prior, adherent)
    std::size_t conflicting_seen = 0;
    for (const Judgment& g : judgments) {
        if (g.context_kind != ContextKind::conflicting) continue;
        ++conflicting_seen;
        auto it = priors_by_qid.find(g.question_id);
        if (it == priors_by_qid.end()) continue;
        items.emplace_back(it->second, g.verdict == Verdict::adherent);
    }
    if (items.empty()) {
        throw CapabilityError(
            "prior_analysis: no prior log-probabilities recorded for the " +
            std::to_string(conflicting_seen) +
            " conflicting judgments; run the probe stage with score_prior=true on a backend "
            "that supports response scoring");
    }

    double lo = items.front().first, hi = items.front().first;
    for (const auto& [p, a] : items) {
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
    double width = (hi - lo) / static_cast<double>(bins);

    std::vector<PriorBin> out(bins);
    for (std::size_t b = 0; b < bins; ++b) {
        out[b].low = lo + width * static_cast<double>(b);
        out[b].high = (b + 1 == bins) ? hi : lo + width * static_cast<double>(b + 1);
    }
    for (const auto& [p, adherent] : items) {
        std::size_t idx = 0;
        if (width > 0) {
            idx = static_cast<std::size_t>((p - lo) / width);
            idx = std::min(idx, bins - 1);
        }
        out[idx].count++;
        if (adherent) out[idx].adherent++;
    }
    for (PriorBin& b : out) {
        if (b.count > 0) b.rate = static_cast<double>(b.adherent) / static_cast<double>(b.count);
    }
    return out;
}

LeakageResult leakage_check(Gateway& gateway, const std::vector<const QuestionRecord*>& questions,
                            const std::map<std::string, ConflictAnswer>& conflicts_by_qid,
                            std::size_t max_new_tokens) {
    std::vector<const QuestionRecord*> targets;
    for (const QuestionRecord* q : questions) {
        if (conflicts_by_qid.count(q->question_id)) targets.push_back(q);
    }
    if (targets.empty()) {
        throw PreconditionError("leakage_check: no questions with conflict answers");
    }

    std::vector<GenerationRequest> requests;
    requests.reserve(targets.size());
    for (const QuestionRecord* q : targets) {
        GenerationRequest req;
        req.prompt = prompts::parameter_answer(q->title, q->question);
        req.temperature = 0.0;
        req.max_new_tokens = max_new_tokens;
        req.request_tag = "leak:" + q->question_id;
        requests.push_back(std::move(req));
    }

    LeakageResult result;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        try {
            ScoredResponse resp = gateway.generate(requests[i]);
            ++result.n_completed;
            const std::string& a_cf = conflicts_by_qid.at(targets[i]->question_id).text;
            if (normalized_contains(resp.text, a_cf)) ++result.n_matched;
        } catch (const Error&) {
            ++result.n_failed;
        }
    }
    if (result.n_completed > 0) {
        result.rate =
            static_cast<double>(result.n_matched) / static_cast<double>(result.n_completed);
    }
    return result;
}

void to_json(json& j, const Judgment& g) {
    j = json{{"question_id", g.question_id},
             {"context_ref", g.context_ref},
             {"context_kind", to_string(g.context_kind)},
             {"verdict", to_string(g.verdict)},
             {"matched_target", g.matched_target}};
}

void from_json(const json& j, Judgment& g) {
    g.question_id = j.at("question_id").get<std::string>();
    g.context_ref = j.at("context_ref").get<std::string>();
    g.context_kind = context_kind_from_string(j.at("context_kind").get<std::string>());
    g.verdict = verdict_from_string(j.at("verdict").get<std::string>());
    g.matched_target = j.value("matched_target", "");
}

void to_json(json& j, const MetricsReport& r) {
    j = json{{"n_conflicting", r.n_conflicting},
             {"n_irrelevant", r.n_irrelevant},
             {"n_total", r.n_total}};
    j["r_ad"] = r.r_ad ? json(*r.r_ad) : json();
    j["r_ad_std"] = r.r_ad_std ? json(*r.r_ad_std) : json();
    j["r_ro"] = r.r_ro ? json(*r.r_ro) : json();
    j["r_ro_std"] = r.r_ro_std ? json(*r.r_ro_std) : json();
}

void to_json(json& j, const PriorBin& b) {
    j = json{{"low", b.low},
             {"high", b.high},
             {"count", b.count},
             {"adherent", b.adherent},
             {"rate", b.rate}};
}

void to_json(json& j, const LeakageResult& r) {
    j = json{{"rate", r.rate},
             {"n_completed", r.n_completed},
             {"n_matched", r.n_matched},
             {"n_failed", r.n_failed}};
}

}  // namespace kcp
