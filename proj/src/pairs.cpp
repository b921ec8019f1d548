#include "kcp/pairs.hpp"

#include <algorithm>
#include <cmath>

#include "kcp/errors.hpp"
#include "kcp/prompts.hpp"
#include "kcp/rng.hpp"
#include "kcp/text.hpp"

namespace kcp {

const char* const kAdherentTemplatePrefix =
    "Based on supplemental knowledge and my own understanding, the answer to this question is "
    "that ";
const char* const kRobustTemplatePrefix =
    "Supplemental knowledge does not answer this question, but based on my knowledge, the answer "
    "to this question is that ";

RenderedResponse render_response(const std::string& answer_core, ResponseTemplate tmpl) {
    if (trim(answer_core).empty()) throw PreconditionError("render_response: empty answer core");
    RenderedResponse out;
    out.tmpl = tmpl;
    out.answer_core = answer_core;
    out.text = (tmpl == ResponseTemplate::adherent ? kAdherentTemplatePrefix
                                                   : kRobustTemplatePrefix) +
               answer_core;
    out.token_length = token_count(out.text);
    return out;
}

namespace {

std::uint64_t iround(double x) { return static_cast<std::uint64_t>(std::floor(x + 0.5)); }

// Largest ir_overinclusion keep-count m <= n_ir whose paired
// round(target * m) fits under n_ig; keeps as much data as possible.
std::pair<std::size_t, std::size_t> balance_counts(std::size_t n_ig, std::size_t n_ir,
                                                   double target) {
    std::size_t m = n_ir;
    while (m >= 1 && iround(target * static_cast<double>(m)) > n_ig) --m;
    std::size_t k_ig = m >= 1 ? static_cast<std::size_t>(iround(target * static_cast<double>(m)))
                              : 0;
    if (m < 1 || k_ig < 1) {
        double lo = 1.0 / static_cast<double>(n_ir);
        double hi = static_cast<double>(n_ig);
        throw RatioUnreachableError(
            "R_error target " + std::to_string(target) + " unreachable with " +
            std::to_string(n_ig) + " ignorance and " + std::to_string(n_ir) +
            " overinclusion candidates; achievable realized ratios span [" + std::to_string(lo) +
            ", " + std::to_string(hi) + "]");
    }
    return {k_ig, m};
}

// Seeded choice of `keep` elements out of `idx`, returned in the original
// order.
std::vector<std::size_t> pick_subset(std::vector<std::size_t> idx, std::size_t keep,
                                     std::uint64_t seed) {
    seeded_shuffle(idx, seed);
    idx.resize(keep);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

AssembleResult assemble_pairs(const AssembleInputs& inputs, const AssembleConfig& config) {
    std::map<std::string, const ContextPackage*> ctx_by_id;
    for (const ContextPackage& c : inputs.contexts) ctx_by_id[c.context_id] = &c;
    std::map<std::string, const QuestionRecord*> q_by_id;
    for (const QuestionRecord* q : inputs.questions) q_by_id[q->question_id] = q;

    AssembleResult result;
    result.report.target_ratio = config.r_error_target;
    result.report.length_tolerance = config.length_tolerance;

    auto conflict_of = [&](const std::string& ctx_id) -> const ConflictAnswer* {
        auto it = inputs.conflicts_by_ctx.find(ctx_id);
        return it == inputs.conflicts_by_ctx.end() ? nullptr : &it->second;
    };
    auto alpha_of = [&](const std::string& qid) -> const ParameterAnswer* {
        auto it = inputs.alphas_by_qid.find(qid);
        return it == inputs.alphas_by_qid.end() ? nullptr : &it->second;
    };

    // Gold targets, one per context: adhere to the conflict answer in
    // conflicting contexts, hold to alpha in irrelevant ones.
    for (const ContextPackage& ctx : inputs.contexts) {
        auto qit = q_by_id.find(ctx.question_id);
        if (qit == q_by_id.end()) continue;
        const QuestionRecord* q = qit->second;
        std::string prompt = prompts::rag_instruction(serialize_context(ctx.docs), q->question);

        if (ctx.kind == ContextKind::conflicting) {
            const ConflictAnswer* cf = conflict_of(ctx.context_id);
            if (!cf) continue;
            result.sft.push_back({ctx.question_id, ctx.context_id, prompt,
                                  render_response(cf->text, ResponseTemplate::adherent)});
        } else {
            const ParameterAnswer* alpha = alpha_of(ctx.question_id);
            if (!alpha || alpha->abstained) continue;
            result.sft.push_back({ctx.question_id, ctx.context_id, prompt,
                                  render_response(alpha->alpha_text, ResponseTemplate::robust)});
        }
    }

    // Preference pairs from the sampled negatives.
    for (const NegativeSample& neg : inputs.negatives) {
        auto cit = ctx_by_id.find(neg.context_ref);
        if (cit == ctx_by_id.end()) continue;
        const ContextPackage& ctx = *cit->second;
        auto qit = q_by_id.find(neg.question_id);
        if (qit == q_by_id.end()) continue;
        const QuestionRecord* q = qit->second;
        const ConflictAnswer* cf = conflict_of(neg.context_ref);
        const ParameterAnswer* alpha = alpha_of(neg.question_id);

        PreferencePair pair;
        pair.question_id = neg.question_id;
        pair.context_ref = neg.context_ref;
        pair.prompt = prompts::rag_instruction(serialize_context(ctx.docs), q->question);

        if (ctx.kind == ContextKind::conflicting) {
            if (!cf) continue;
            if (neg.error_type == NegErrorType::overinclusion) {
                pair.pair_type = PairType::cf_overinclusion;
                pair.chosen = render_response(cf->text, ResponseTemplate::adherent);
                pair.rejected = render_response(neg.answer_text, ResponseTemplate::adherent);
            } else {
                pair.pair_type = PairType::cf_ignorance;
                pair.chosen = render_response(cf->text, ResponseTemplate::adherent);
                pair.rejected = render_response(neg.answer_text, ResponseTemplate::robust);
            }
        } else {
            if (neg.error_type != NegErrorType::overinclusion) continue;
            if (!alpha || alpha->abstained) continue;
            pair.pair_type = PairType::ir_overinclusion;
            pair.chosen = render_response(alpha->alpha_text, ResponseTemplate::robust);
            pair.rejected = render_response(neg.answer_text, ResponseTemplate::adherent);
        }

        if (normalize_answer(pair.chosen.answer_core) ==
            normalize_answer(pair.rejected.answer_core)) {
            ++result.report.skipped_degenerate;
            continue;
        }
        result.pairs.push_back(std::move(pair));
    }

    std::stable_sort(result.pairs.begin(), result.pairs.end(),
                     [](const PreferencePair& a, const PreferencePair& b) {
                         if (a.question_id != b.question_id) return a.question_id < b.question_id;
                         return static_cast<int>(a.pair_type) < static_cast<int>(b.pair_type);
                     });

    std::vector<std::size_t> ig_idx, ir_idx;
    for (std::size_t i = 0; i < result.pairs.size(); ++i) {
        if (result.pairs[i].pair_type == PairType::cf_ignorance) ig_idx.push_back(i);
        if (result.pairs[i].pair_type == PairType::ir_overinclusion) ir_idx.push_back(i);
    }
    for (const PreferencePair& p : result.pairs) {
        result.report.candidate_counts[to_string(p.pair_type)]++;
    }

    // cf_overinclusion is not part of the error ratio and is always kept in
    // full; the other two classes are downsampled toward the target.
    if (!ig_idx.empty() || !ir_idx.empty()) {
        if (ig_idx.empty() || ir_idx.empty()) {
            throw RatioUnreachableError(
                "R_error target " + std::to_string(config.r_error_target) +
                " unreachable: counts are cf_ignorance=" + std::to_string(ig_idx.size()) +
                ", ir_overinclusion=" + std::to_string(ir_idx.size()) +
                " (one class has no candidates)");
        }
        auto [k_ig, k_ir] = balance_counts(ig_idx.size(), ir_idx.size(), config.r_error_target);
        std::vector<std::size_t> keep_ig =
            pick_subset(ig_idx, k_ig, derive_seed(config.seed, "ratio/cf_ignorance"));
        std::vector<std::size_t> keep_ir =
            pick_subset(ir_idx, k_ir, derive_seed(config.seed, "ratio/ir_overinclusion"));

        std::vector<bool> keep(result.pairs.size(), true);
        for (std::size_t i : ig_idx) keep[i] = false;
        for (std::size_t i : ir_idx) keep[i] = false;
        for (std::size_t i : keep_ig) keep[i] = true;
        for (std::size_t i : keep_ir) keep[i] = true;

        std::vector<PreferencePair> kept;
        kept.reserve(result.pairs.size());
        for (std::size_t i = 0; i < result.pairs.size(); ++i) {
            if (keep[i]) kept.push_back(std::move(result.pairs[i]));
        }
        result.pairs = std::move(kept);
        result.report.realized_ratio =
            static_cast<double>(k_ig) / static_cast<double>(k_ir);
    }

    for (const PreferencePair& p : result.pairs) {
        result.report.counts[to_string(p.pair_type)]++;
    }

    BalanceReport lengths = check_length_alignment(result.pairs, config.length_tolerance);
    result.report.mean_len_win = lengths.mean_len_win;
    result.report.mean_len_loss = lengths.mean_len_loss;
    result.report.length_flagged = lengths.length_flagged;
    return result;
}

BalanceReport check_length_alignment(const std::vector<PreferencePair>& pairs, double tolerance) {
    BalanceReport report;
    report.length_tolerance = tolerance;
    if (pairs.empty()) return report;
    double win = 0, loss = 0;
    for (const PreferencePair& p : pairs) {
        win += static_cast<double>(p.chosen.token_length);
        loss += static_cast<double>(p.rejected.token_length);
    }
    report.mean_len_win = win / static_cast<double>(pairs.size());
    report.mean_len_loss = loss / static_cast<double>(pairs.size());
    if (report.mean_len_win > 0) {
        double rel = std::fabs(report.mean_len_win - report.mean_len_loss) / report.mean_len_win;
        report.length_flagged = rel > tolerance;
    }
    return report;
}

std::string to_string(PairType t) {
    switch (t) {
        case PairType::cf_overinclusion: return "cf_overinclusion";
        case PairType::cf_ignorance: return "cf_ignorance";
        default: return "ir_overinclusion";
    }
}

PairType pair_type_from_string(const std::string& s) {
    if (s == "cf_overinclusion") return PairType::cf_overinclusion;
    if (s == "cf_ignorance") return PairType::cf_ignorance;
    if (s == "ir_overinclusion") return PairType::ir_overinclusion;
    throw ValidationError("unknown pair_type: " + s);
}

void to_json(json& j, const PreferencePair& p) {
    j = json{{"prompt", p.prompt},          {"chosen", p.chosen.text},
             {"rejected", p.rejected.text}, {"pair_type", to_string(p.pair_type)},
             {"question_id", p.question_id}, {"context_ref", p.context_ref}};
}

void to_json(json& j, const SFTExample& e) {
    j = json{{"messages", json::array({json{{"role", "user"}, {"content", e.prompt}},
                                       json{{"role", "assistant"}, {"content", e.target.text}}})},
             {"question_id", e.question_id},
             {"context_ref", e.context_ref}};
}

void to_json(json& j, const BalanceReport& r) {
    j = json{{"mean_len_win", r.mean_len_win},
             {"mean_len_loss", r.mean_len_loss},
             {"length_flagged", r.length_flagged},
             {"length_tolerance", r.length_tolerance},
             {"target_ratio", r.target_ratio},
             {"counts", r.counts},
             {"candidate_counts", r.candidate_counts},
             {"skipped_degenerate", r.skipped_degenerate}};
    if (r.realized_ratio) j["realized_ratio"] = *r.realized_ratio;
}

void from_json(const json& j, BalanceReport& r) {
    r.mean_len_win = j.value("mean_len_win", 0.0);
    r.mean_len_loss = j.value("mean_len_loss", 0.0);
    r.length_flagged = j.value("length_flagged", false);
    r.length_tolerance = j.value("length_tolerance", 0.05);
    r.target_ratio = j.value("target_ratio", 1.0);
    r.counts = j.value("counts", std::map<std::string, std::size_t>{});
    r.candidate_counts = j.value("candidate_counts", std::map<std::string, std::size_t>{});
    r.skipped_degenerate = j.value("skipped_degenerate", std::size_t{0});
    if (j.contains("realized_ratio") && !j["realized_ratio"].is_null()) {
        r.realized_ratio = j["realized_ratio"].get<double>();
    } else {
        r.realized_ratio.reset();
    }
}

ExportPaths export_training(const AssembleResult& result, const std::vector<std::string>& formats,
                            const std::filesystem::path& dir, const json& extra_manifest) {
    std::filesystem::create_directories(dir);
    ExportPaths paths;
    std::vector<std::filesystem::path> written;

    auto finalize = [&](const std::filesystem::path& target, const std::string& content) {
        std::filesystem::path tmp = target;
        tmp += ".tmp";
        write_file(tmp, content);
        std::filesystem::rename(tmp, target);
        written.push_back(target);
    };

    try {
        bool want_dpo = std::find(formats.begin(), formats.end(), "dpo_pairs") != formats.end();
        bool want_sft = std::find(formats.begin(), formats.end(), "sft_chat") != formats.end();
        for (const std::string& f : formats) {
            if (f != "dpo_pairs" && f != "sft_chat") {
                throw PreconditionError("export_training: unknown format: " + f);
            }
        }

        if (want_dpo) {
            std::string body;
            for (const PreferencePair& p : result.pairs) {
                body += json(p).dump();
                body += '\n';
            }
            paths.dpo_pairs = dir / "dpo_pairs.jsonl";
            finalize(paths.dpo_pairs, body);
        }
        if (want_sft) {
            std::string body;
            for (const SFTExample& e : result.sft) {
                body += json(e).dump();
                body += '\n';
            }
            paths.sft_chat = dir / "sft_chat.jsonl";
            finalize(paths.sft_chat, body);
        }

        // Training hyperparameters ship with every export so downstream
        // runs do not have to guess them.
        paths.trainer_config = dir / "trainer_config.txt";
        finalize(paths.trainer_config,
                 "sft.learning_rate=1e-5\n"
                 "sft.epochs=1\n"
                 "sft.adapter=lora\n"
                 "dpo.learning_rate=5e-6\n"
                 "dpo.epochs=1\n"
                 "dpo.adapter=lora\n");

        json manifest = extra_manifest.is_object() ? extra_manifest : json::object();
        manifest["balance_report"] = result.report;
        manifest["counts"] = json{{"preference_pairs", result.pairs.size()},
                                  {"sft_examples", result.sft.size()}};
        json files = json::object();
        if (want_dpo) {
            files["dpo_pairs.jsonl"] = json{{"records", result.pairs.size()},
                                            {"hash", file_hash_hex(paths.dpo_pairs)}};
        }
        if (want_sft) {
            files["sft_chat.jsonl"] = json{{"records", result.sft.size()},
                                           {"hash", file_hash_hex(paths.sft_chat)}};
        }
        manifest["files"] = files;
        paths.manifest = dir / "manifest.json";
        finalize(paths.manifest, manifest.dump(2) + "\n");
    } catch (...) {
        for (const std::filesystem::path& p : written) {
            std::error_code ec;
            std::filesystem::remove(p, ec);
        }
        throw;
    }
    return paths;
}

}  // namespace kcp
