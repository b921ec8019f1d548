#include <algorithm>
#include <cmath>
#include <sstream>

#include "kcp/errors.hpp"
#include "kcp/pairs.hpp"
#include "kcp/pipeline.hpp"
#include "kcp/text.hpp"

namespace kcp {

namespace {

namespace fs = std::filesystem;

struct Checker {
    std::vector<ValidationIssue> issues;
    void add(std::string check, std::string subject, std::string detail) {
        issues.push_back({std::move(check), std::move(subject), std::move(detail)});
    }
};

bool starts_with(const std::string& s, const std::string& prefix) {
    return s.size() >= prefix.size() && s.compare(0, prefix.size(), prefix) == 0;
}

// Splits a rendered response into (prefix ok, core).
std::pair<bool, std::string> peel_template(const std::string& text, ResponseTemplate tmpl) {
    const std::string prefix =
        tmpl == ResponseTemplate::adherent ? kAdherentTemplatePrefix : kRobustTemplatePrefix;
    if (!starts_with(text, prefix)) return {false, ""};
    return {true, text.substr(prefix.size())};
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace

std::vector<ValidationIssue> validate_dataset(const std::filesystem::path& out_dir) {
    Checker c;
    LoadedDataset data = load_dataset(out_dir);

    std::size_t k_docs = 4;
    double length_tolerance = 0.05;
    bool hard_fallback = false;
    if (data.run_manifest.contains("config")) {
        const json& cfg = data.run_manifest["config"];
        k_docs = cfg.value("k_docs", std::size_t{4});
        length_tolerance = cfg.value("length_tolerance", 0.05);
        hard_fallback = cfg.value("hard_fallback", false);
    }

    std::map<std::string, ConflictAnswer> by_ctx = conflicts_by_context(data.contexts, data.conflicts);
    std::map<std::string, const ContextPackage*> ctx_by_id;
    std::map<std::string, std::string> serialized;

    // ---- context invariants ----
    for (const ContextPackage& ctx : data.contexts) {
        ctx_by_id[ctx.context_id] = &ctx;
        const QuestionRecord* q = data.snapshot.find_question(ctx.question_id);
        if (!q) {
            c.add("question_ref", ctx.context_id, "question " + ctx.question_id +
                                                      " is not in the snapshot");
            continue;
        }
        if (ctx.docs.size() != k_docs) {
            c.add("k_docs", ctx.context_id,
                  "has " + std::to_string(ctx.docs.size()) + " docs, expected " +
                      std::to_string(k_docs));
        }
        if (!ctx.audit.canonical_doc_ids.empty()) {
            std::vector<std::string> got, want = ctx.audit.canonical_doc_ids;
            for (const Document& d : ctx.docs) got.push_back(d.doc_id);
            std::sort(got.begin(), got.end());
            std::sort(want.begin(), want.end());
            if (got != want) {
                c.add("shuffle_bijection", ctx.context_id,
                      "shuffled doc multiset differs from the canonical multiset");
            }
        }

        if (ctx.kind == ContextKind::conflicting) {
            auto cit = by_ctx.find(ctx.context_id);
            if (cit == by_ctx.end()) {
                c.add("conflict_ref", ctx.context_id, "no conflict answer recorded");
                continue;
            }
            const ConflictAnswer& cf = cit->second;
            if (cf.text.empty() ||
                (!cf.alpha_ref.empty() &&
                 normalize_answer(cf.text) == normalize_answer(cf.alpha_ref))) {
                c.add("conflict_condition", ctx.context_id,
                      "conflict answer \"" + cf.text + "\" does not disagree with alpha \"" +
                          cf.alpha_ref + "\"");
            }
            if (cf.kind == ConflictKind::counterfactual) {
                for (const std::string& a : q->realistic_answers) {
                    if (normalize_answer(a) == normalize_answer(cf.text)) {
                        c.add("counterfactual_distinct", ctx.context_id,
                              "counterfactual equals realistic answer \"" + a + "\"");
                        break;
                    }
                }
            }
            std::size_t hits = 0, at = 0;
            for (std::size_t i = 0; i < ctx.docs.size(); ++i) {
                if (normalized_contains(ctx.docs[i].text, cf.text)) {
                    ++hits;
                    at = i;
                }
            }
            if (hits != 1) {
                c.add("conflict_containment", ctx.context_id,
                      "conflict answer occurs in " + std::to_string(hits) +
                          " docs, expected exactly 1");
            } else if (!ctx.evidence_position || *ctx.evidence_position != at) {
                c.add("evidence_position", ctx.context_id,
                      "conflict answer sits at index " + std::to_string(at) +
                          ", recorded evidence_position is " +
                          (ctx.evidence_position ? std::to_string(*ctx.evidence_position)
                                                 : std::string("absent")));
            }
            if (cf.kind == ConflictKind::counterfactual && ctx.evidence_position &&
                *ctx.evidence_position < ctx.docs.size()) {
                const Document& ev = ctx.docs[*ctx.evidence_position];
                for (const std::string& a : q->realistic_answers) {
                    if (normalize_answer(a).empty()) continue;
                    if (normalize_answer(a) == normalize_answer(cf.text)) continue;
                    if (normalized_contains(ev.text, a)) {
                        c.add("counterfactual_residual", ctx.context_id,
                              "realistic answer \"" + a + "\" survives in the evidence document");
                        break;
                    }
                }
            }
        } else {
            bool flagged = false;
            for (const Document& d : ctx.docs) {
                auto it = q->answerable.find(d.doc_id);
                if (it != q->answerable.end() && it->second) {
                    c.add("irrelevant_answerable", ctx.context_id,
                          d.doc_id + " is annotated as answering the question");
                    flagged = true;
                    break;
                }
            }
            if (!flagged) {
                for (const Document& d : ctx.docs) {
                    auto it = q->answerable.find(d.doc_id);
                    bool annotated_hard = it != q->answerable.end() && !it->second;
                    if (annotated_hard || d.title != q->title) continue;
                    // Same-topic doc without an annotation: legal only as a
                    // fallback hard doc, which must not contain an answer.
                    bool ok = hard_fallback;
                    if (ok) {
                        for (const std::string& a : q->realistic_answers) {
                            if (normalized_contains(d.text, a)) {
                                ok = false;
                                break;
                            }
                        }
                    }
                    if (!ok) {
                        c.add("irrelevant_composition", ctx.context_id,
                              d.doc_id + " shares the question's topic without an unanswerable "
                                         "annotation");
                        break;
                    }
                }
            }
        }
    }

    auto serialize_of = [&](const ContextPackage& ctx) -> const std::string& {
        auto it = serialized.find(ctx.context_id);
        if (it == serialized.end()) {
            it = serialized.emplace(ctx.context_id, serialize_context(ctx.docs)).first;
        }
        return it->second;
    };

    // ---- negative invariants ----
    std::map<std::string, std::vector<std::string>> over_by_ctx;
    for (const NegativeSample& n : data.negatives) {
        auto it = ctx_by_id.find(n.context_ref);
        if (it == ctx_by_id.end()) {
            c.add("negative_context_ref", n.context_ref, "context not found for a negative");
            continue;
        }
        const ContextPackage& ctx = *it->second;
        if (n.error_type == NegErrorType::overinclusion) {
            over_by_ctx[n.context_ref].push_back(n.answer_text);
            if (!ci_contains(serialize_of(ctx), n.answer_text)) {
                c.add("overinclusion_containment", n.context_ref,
                      "\"" + n.answer_text + "\" does not occur in the serialized context");
            }
            std::string potential;
            if (ctx.kind == ContextKind::conflicting) {
                auto cit = by_ctx.find(ctx.context_id);
                if (cit != by_ctx.end()) potential = cit->second.text;
            } else {
                auto ait = data.alphas_by_qid.find(ctx.question_id);
                if (ait != data.alphas_by_qid.end()) potential = ait->second.alpha_text;
            }
            if (!potential.empty() &&
                normalize_answer(n.answer_text) == normalize_answer(potential)) {
                c.add("overinclusion_distinct", n.context_ref,
                      "overinclusion answer equals the potential answer \"" + potential + "\"");
            }
        } else {
            if (ctx.kind != ContextKind::conflicting) {
                c.add("ignorance_context_kind", n.context_ref,
                      "ignorance negative attached to a non-conflicting context");
                continue;
            }
            auto ait = data.alphas_by_qid.find(ctx.question_id);
            if (ait == data.alphas_by_qid.end() || ait->second.abstained) {
                c.add("ignorance_alpha", n.context_ref,
                      "ignorance negative exists but the probe abstained");
            } else if (normalize_answer(n.answer_text) !=
                       normalize_answer(ait->second.alpha_text)) {
                c.add("ignorance_mismatch", n.context_ref,
                      "ignorance answer differs from alpha");
            }
        }
    }

    // ---- exports ----
    const fs::path dpo_path = out_dir / "export" / "dpo_pairs.jsonl";
    std::map<std::string, std::size_t> pair_counts;
    double win_tokens = 0, loss_tokens = 0;
    std::size_t n_pairs = 0;
    if (fs::exists(dpo_path)) {
        for_each_jsonl(dpo_path, [&](const json& row, std::size_t line) {
            std::string subject = "dpo_pairs.jsonl:" + std::to_string(line);
            std::string type_s = row.value("pair_type", "");
            PairType type;
            try {
                type = pair_type_from_string(type_s);
            } catch (const Error&) {
                c.add("pair_schema", subject, "unknown pair_type \"" + type_s + "\"");
                return;
            }
            std::string prompt = row.value("prompt", "");
            std::string chosen = row.value("chosen", "");
            std::string rejected = row.value("rejected", "");
            std::string ctx_ref = row.value("context_ref", "");

            ++n_pairs;
            pair_counts[type_s]++;
            win_tokens += static_cast<double>(token_count(chosen));
            loss_tokens += static_cast<double>(token_count(rejected));

            if (!starts_with(prompt, "[Instruction] As a knowledge-based QA expert") ||
                prompt.find("[Supplemental Knowledge]") == std::string::npos ||
                prompt.find("[User's Question]") == std::string::npos) {
                c.add("prompt_format", subject, "prompt does not follow the QA instruction layout");
            }

            auto it = ctx_by_id.find(ctx_ref);
            if (it == ctx_by_id.end()) {
                c.add("pair_context_ref", subject, "context " + ctx_ref + " not found");
                return;
            }
            const ContextPackage& ctx = *it->second;
            bool cf_pair = type != PairType::ir_overinclusion;
            if (cf_pair != (ctx.kind == ContextKind::conflicting)) {
                c.add("pair_context_kind", subject,
                      type_s + " refers to a " + to_string(ctx.kind) + " context");
                return;
            }

            ResponseTemplate chosen_tmpl =
                type == PairType::ir_overinclusion ? ResponseTemplate::robust
                                                   : ResponseTemplate::adherent;
            ResponseTemplate rejected_tmpl =
                type == PairType::cf_ignorance ? ResponseTemplate::robust
                                               : ResponseTemplate::adherent;
            auto [chosen_ok, chosen_core] = peel_template(chosen, chosen_tmpl);
            auto [rejected_ok, rejected_core] = peel_template(rejected, rejected_tmpl);
            if (!chosen_ok || chosen_core.empty()) {
                c.add("template_chosen", subject, "chosen response does not match its template");
                return;
            }
            if (!rejected_ok || rejected_core.empty()) {
                c.add("template_rejected", subject,
                      "rejected response does not match its template");
                return;
            }
            if (normalize_answer(chosen_core) == normalize_answer(rejected_core)) {
                c.add("degenerate_pair", subject, "chosen and rejected share the same answer");
            }

            // Core provenance against the stage records.
            std::string expected_chosen;
            if (type == PairType::ir_overinclusion) {
                auto ait = data.alphas_by_qid.find(ctx.question_id);
                if (ait != data.alphas_by_qid.end()) expected_chosen = ait->second.alpha_text;
            } else {
                auto cit = by_ctx.find(ctx.context_id);
                if (cit != by_ctx.end()) expected_chosen = cit->second.text;
            }
            if (!expected_chosen.empty() && chosen_core != expected_chosen) {
                c.add("chosen_provenance", subject,
                      "chosen core \"" + chosen_core + "\" does not match the recorded answer \"" +
                          expected_chosen + "\"");
            }
            if (type == PairType::cf_ignorance) {
                auto ait = data.alphas_by_qid.find(ctx.question_id);
                if (ait != data.alphas_by_qid.end() && !ait->second.abstained &&
                    rejected_core != ait->second.alpha_text) {
                    c.add("rejected_provenance", subject,
                          "cf_ignorance rejected core does not match alpha");
                }
            } else {
                const auto& overs = over_by_ctx[ctx.context_id];
                if (std::find(overs.begin(), overs.end(), rejected_core) == overs.end()) {
                    c.add("rejected_provenance", subject,
                          "rejected core is not a recorded overinclusion sample for " +
                              ctx.context_id);
                }
            }
        });
    }

    // ---- balance recomputation ----
    if (data.run_manifest.contains("balance_report")) {
        BalanceReport report = data.run_manifest["balance_report"].get<BalanceReport>();
        std::size_t n_ig = pair_counts["cf_ignorance"];
        std::size_t n_ir = pair_counts["ir_overinclusion"];
        if (report.realized_ratio) {
            if (n_ir == 0) {
                c.add("ratio_report", "export",
                      "manifest reports a realized ratio but the export has no ir_overinclusion "
                      "pairs");
            } else {
                double recomputed = static_cast<double>(n_ig) / static_cast<double>(n_ir);
                if (std::abs(recomputed - *report.realized_ratio) > 1e-9) {
                    c.add("ratio_report", "export",
                          "recomputed ratio " + fmt_double(recomputed) +
                              " differs from the reported " + fmt_double(*report.realized_ratio));
                }
                double bound = 0.5 / static_cast<double>(n_ir) + 1e-9;
                if (std::abs(recomputed - report.target_ratio) > bound) {
                    c.add("ratio_target", "export",
                          "realized ratio " + fmt_double(recomputed) + " misses target " +
                              fmt_double(report.target_ratio) + " by more than rounding (" +
                              fmt_double(bound) + ")");
                }
            }
        }
        if (n_pairs > 0) {
            double mean_win = win_tokens / static_cast<double>(n_pairs);
            double mean_loss = loss_tokens / static_cast<double>(n_pairs);
            if (mean_win > 0) {
                double rel = std::abs(mean_win - mean_loss) / mean_win;
                if (rel > length_tolerance) {
                    c.add("length_alignment", "export",
                          "mean winning length " + fmt_double(mean_win) + " vs losing " +
                              fmt_double(mean_loss) + " differs by " + fmt_double(rel * 100) +
                              "%, tolerance is " + fmt_double(length_tolerance * 100) + "%");
                }
            }
        }
    }

    // ---- sft targets ----
    const fs::path sft_path = out_dir / "export" / "sft_chat.jsonl";
    if (fs::exists(sft_path)) {
        for_each_jsonl(sft_path, [&](const json& row, std::size_t line) {
            std::string subject = "sft_chat.jsonl:" + std::to_string(line);
            if (!row.contains("messages") || !row["messages"].is_array() ||
                row["messages"].size() != 2) {
                c.add("sft_schema", subject, "expected exactly two chat messages");
                return;
            }
            const json& user = row["messages"][0];
            const json& assistant = row["messages"][1];
            if (user.value("role", "") != "user" || assistant.value("role", "") != "assistant") {
                c.add("sft_schema", subject, "messages must be user then assistant");
                return;
            }
            std::string ctx_ref = row.value("context_ref", "");
            auto it = ctx_by_id.find(ctx_ref);
            if (it == ctx_by_id.end()) {
                c.add("sft_context_ref", subject, "context " + ctx_ref + " not found");
                return;
            }
            const ContextPackage& ctx = *it->second;
            std::string target = assistant.value("content", "");
            ResponseTemplate tmpl = ctx.kind == ContextKind::conflicting
                                        ? ResponseTemplate::adherent
                                        : ResponseTemplate::robust;
            auto [ok, core] = peel_template(target, tmpl);
            if (!ok || core.empty()) {
                c.add("sft_template", subject, "target does not match the expected template");
                return;
            }
            std::string expected;
            if (ctx.kind == ContextKind::conflicting) {
                auto cit = by_ctx.find(ctx.context_id);
                if (cit != by_ctx.end()) expected = cit->second.text;
            } else {
                auto ait = data.alphas_by_qid.find(ctx.question_id);
                if (ait != data.alphas_by_qid.end()) expected = ait->second.alpha_text;
            }
            if (!expected.empty() && core != expected) {
                c.add("sft_provenance", subject,
                      "target core does not match the recorded answer for " + ctx.context_id);
            }
        });
    }

    return c.issues;
}

}  // namespace kcp
