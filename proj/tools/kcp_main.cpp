#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kcp/config.hpp"
#include "kcp/errors.hpp"
#include "kcp/eval.hpp"
#include "kcp/gateway.hpp"
#include "kcp/pipeline.hpp"
#include "kcp/prompts.hpp"
#include "kcp/text.hpp"

namespace {

using namespace kcp;
namespace fs = std::filesystem;

struct CommonFlags {
    std::string config_file;
    std::string corpus;
    std::string format;
    std::string out;
    std::string backend;
    std::uint64_t seed = 0;
    double r_error = 0;
    std::size_t k_docs = 0;
    std::size_t parallelism = 0;
    bool emit_both = false;
    bool hard_fallback = false;

    CLI::Option* o_config = nullptr;
    CLI::Option* o_corpus = nullptr;
    CLI::Option* o_format = nullptr;
    CLI::Option* o_out = nullptr;
    CLI::Option* o_backend = nullptr;
    CLI::Option* o_seed = nullptr;
    CLI::Option* o_r_error = nullptr;
    CLI::Option* o_k_docs = nullptr;
    CLI::Option* o_parallelism = nullptr;
    CLI::Option* o_emit_both = nullptr;
    CLI::Option* o_hard_fallback = nullptr;
};

void add_common(CLI::App* sub, CommonFlags& f) {
    f.o_config = sub->add_option("--config", f.config_file, "key=value config file");
    f.o_corpus = sub->add_option("--corpus", f.corpus, "corpus file (jsonl)");
    f.o_format = sub->add_option("--format", f.format, "corpus format: generic_qa | squad_v2");
    f.o_out = sub->add_option("--out", f.out, "output directory");
    f.o_backend =
        sub->add_option("--backend", f.backend, "backend spec: mock:<script> | http(s)://host");
    f.o_seed = sub->add_option("--seed", f.seed, "run seed");
    f.o_r_error =
        sub->add_option("--r-error", f.r_error, "target cf_ignorance / ir_overinclusion ratio");
    f.o_k_docs = sub->add_option("--k-docs", f.k_docs, "documents per context");
    f.o_parallelism =
        sub->add_option("--parallelism", f.parallelism, "worker threads and in-flight requests");
    f.o_emit_both = sub->add_flag("--emit-both", f.emit_both,
                                  "emit a counterfactual conflict next to a realistic one");
    f.o_hard_fallback = sub->add_flag("--hard-fallback", f.hard_fallback,
                                      "allow similarity-ranked hard documents when annotations "
                                      "are missing");
}

RunConfig resolve_config(const CommonFlags& f) {
    RunConfig cfg;
    if (f.o_config->count()) cfg = load_config_file(f.config_file, cfg);
    if (f.o_corpus->count()) cfg.corpus_path = f.corpus;
    if (f.o_format->count()) cfg.corpus_format = f.format;
    if (f.o_out->count()) cfg.out_dir = f.out;
    if (f.o_backend->count()) cfg.backend = f.backend;
    if (f.o_seed->count()) cfg.seed = f.seed;
    if (f.o_r_error->count()) cfg.r_error = f.r_error;
    if (f.o_k_docs->count()) cfg.k_docs = f.k_docs;
    if (f.o_parallelism->count()) cfg.parallelism = f.parallelism;
    if (f.o_emit_both->count()) cfg.emit_both_conflicts = true;
    if (f.o_hard_fallback->count()) cfg.hard_fallback = true;
    return cfg;
}

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

int cmd_build(const CommonFlags& flags) {
    RunConfig cfg = resolve_config(flags);
    BuildOutcome outcome = run_build(cfg);

    std::cout << "snapshot " << outcome.snapshot_id << "\n";
    for (const StageStatus& s : outcome.stages) {
        std::cout << "stage " << s.name << " processed=" << s.processed
                  << " quarantined=" << s.quarantined << (s.reused ? " (reused)" : "") << "\n";
    }
    const json& stats = outcome.statistics;
    std::cout << "contexts conflicting=" << stats["contexts"]["num_conflicting"]
              << " irrelevant=" << stats["contexts"]["num_irrelevant"]
              << " total=" << stats["contexts"]["num_total"] << "\n";
    std::cout << "pairs";
    for (const auto& [type, count] : outcome.report.counts) {
        std::cout << " " << type << "=" << count;
    }
    std::cout << "\n";
    std::cout << "sft_examples " << stats["sft_examples"] << "\n";
    if (outcome.report.realized_ratio) {
        std::cout << "r_error realized=" << fmt("%.6f", *outcome.report.realized_ratio)
                  << " target=" << fmt("%g", outcome.report.target_ratio) << "\n";
    }
    std::cout << "length mean_win=" << fmt("%.4f", outcome.report.mean_len_win)
              << " mean_loss=" << fmt("%.4f", outcome.report.mean_len_loss)
              << (outcome.report.length_flagged ? " FLAGGED" : " aligned") << "\n";
    std::cout << "manifest " << outcome.manifest_path.string() << "\n";
    std::cout << "ok\n";
    return 0;
}

int cmd_validate(const std::string& data_dir) {
    std::vector<ValidationIssue> issues = validate_dataset(data_dir);
    bool empty_dataset = !fs::exists(fs::path(data_dir) / "stages" / "contexts.jsonl") ||
                         read_jsonl(fs::path(data_dir) / "stages" / "contexts.jsonl").empty();
    if (empty_dataset) {
        std::cout << "warning: dataset contains no contexts; nothing to validate\n";
    }
    for (const ValidationIssue& i : issues) {
        std::cout << "violation check=" << i.check << " subject=" << i.subject << ": " << i.detail
                  << "\n";
    }
    std::cout << "total_violations " << issues.size() << "\n";
    return issues.empty() ? 0 : 1;
}

struct EvalFlags {
    std::string data_dir = "out";
    std::string outputs_file;
    bool live = false;
    std::string backend;
    std::size_t eval_runs = 1;
    double temperature = 0.0;
    std::size_t bootstrap = 1000;
    std::uint64_t seed = 17;
    std::size_t prior_bins = 5;
    std::size_t max_new_tokens = 256;
    std::string judgments_out;
};

// Judges one batch of model outputs against the dataset's gold answers.
// Outputs whose context is unknown, or conflicting contexts without a
// recorded conflict answer, are skipped and counted.
std::vector<Judgment> judge_outputs(const std::vector<ModelOutput>& outputs,
                                    const std::map<std::string, const ContextPackage*>& ctx_by_id,
                                    const std::map<std::string, ConflictAnswer>& by_ctx,
                                    const std::map<std::string, ParameterAnswer>& alphas,
                                    std::size_t& skipped) {
    std::vector<Judgment> out;
    for (const ModelOutput& mo : outputs) {
        auto it = ctx_by_id.find(mo.context_ref);
        if (it == ctx_by_id.end()) {
            ++skipped;
            continue;
        }
        const ContextPackage& ctx = *it->second;
        GoldSet gold;
        if (ctx.kind == ContextKind::conflicting) {
            auto cit = by_ctx.find(ctx.context_id);
            if (cit == by_ctx.end()) {
                ++skipped;
                continue;
            }
            gold.a_cf = cit->second.text;
        }
        auto ait = alphas.find(ctx.question_id);
        if (ait != alphas.end() && !ait->second.abstained) gold.alpha = ait->second.alpha_text;
        if (ctx.kind == ContextKind::irrelevant && !gold.alpha) {
            ++skipped;
            continue;
        }
        out.push_back(judge(mo, ctx.kind, gold));
    }
    return out;
}

void print_metrics(const MetricsReport& report) {
    std::cout << "n_conflicting " << report.n_conflicting << "\n";
    std::cout << "n_irrelevant " << report.n_irrelevant << "\n";
    std::cout << "n_total " << report.n_total << "\n";
    if (report.r_ad) std::cout << "r_ad " << fmt("%.3f", *report.r_ad) << "\n";
    if (report.r_ad_std) std::cout << "r_ad_std " << fmt("%.17g", *report.r_ad_std) << "\n";
    if (report.r_ro) std::cout << "r_ro " << fmt("%.3f", *report.r_ro) << "\n";
    if (report.r_ro_std) std::cout << "r_ro_std " << fmt("%.17g", *report.r_ro_std) << "\n";
}

int cmd_evaluate(const EvalFlags& ef) {
    LoadedDataset data = load_dataset(ef.data_dir);
    auto by_ctx = conflicts_by_context(data.contexts, data.conflicts);
    std::map<std::string, const ContextPackage*> ctx_by_id;
    for (const ContextPackage& c : data.contexts) ctx_by_id[c.context_id] = &c;

    std::size_t skipped = 0;
    std::vector<Judgment> judgments;
    std::optional<std::pair<double, double>> runs_r_ad, runs_r_ro;

    if (!ef.outputs_file.empty()) {
        std::vector<ModelOutput> outputs;
        for (const json& row : read_jsonl(ef.outputs_file)) {
            ModelOutput mo;
            mo.question_id = row.value("question_id", "");
            mo.context_ref = row.value("context_ref", "");
            mo.response_text = row.value("response_text", "");
            outputs.push_back(std::move(mo));
        }
        judgments = judge_outputs(outputs, ctx_by_id, by_ctx, data.alphas_by_qid, skipped);
    } else if (ef.live) {
        std::string spec = ef.backend;
        if (spec.empty() && data.run_manifest.contains("config")) {
            spec = data.run_manifest["config"].value("backend", "");
        }
        if (spec.empty()) {
            throw PreconditionError("evaluate --live needs --backend (none found in the run "
                                    "manifest)");
        }
        auto backend = make_backend(spec, "default", "KCP_API_TOKEN");
        GatewayConfig gc;
        gc.cache_dir = fs::path(ef.data_dir) / "cache";
        Gateway gateway(backend, gc);

        std::vector<GenerationRequest> requests;
        std::vector<const ContextPackage*> request_ctx;
        for (const ContextPackage& ctx : data.contexts) {
            const QuestionRecord* q = data.snapshot.find_question(ctx.question_id);
            if (!q) continue;
            GenerationRequest req;
            req.prompt = prompts::rag_instruction(serialize_context(ctx.docs), q->question);
            req.temperature = ef.temperature;
            req.max_new_tokens = static_cast<int>(ef.max_new_tokens);
            req.request_tag = "eval:" + ctx.context_id;
            requests.push_back(std::move(req));
            request_ctx.push_back(&ctx);
        }

        std::vector<double> run_r_ad, run_r_ro;
        for (std::size_t run = 0; run < std::max<std::size_t>(ef.eval_runs, 1); ++run) {
            std::vector<ScoredResponse> responses = gateway.generate_batch(requests);
            std::vector<ModelOutput> outputs;
            outputs.reserve(responses.size());
            for (std::size_t i = 0; i < responses.size(); ++i) {
                outputs.push_back({request_ctx[i]->question_id, request_ctx[i]->context_id,
                                   responses[i].text});
            }
            std::size_t run_skipped = 0;
            std::vector<Judgment> run_judgments =
                judge_outputs(outputs, ctx_by_id, by_ctx, data.alphas_by_qid, run_skipped);
            if (run == 0) {
                judgments = run_judgments;
                skipped = run_skipped;
            }
            if (ef.eval_runs > 1 && !run_judgments.empty()) {
                MetricsReport r = aggregate(run_judgments, 0, ef.seed);
                if (r.r_ad) run_r_ad.push_back(*r.r_ad);
                if (r.r_ro) run_r_ro.push_back(*r.r_ro);
            }
        }
        if (ef.eval_runs > 1) {
            if (!run_r_ad.empty()) runs_r_ad = mean_and_std(run_r_ad);
            if (!run_r_ro.empty()) runs_r_ro = mean_and_std(run_r_ro);
        }
    } else {
        throw PreconditionError("evaluate needs --outputs <file> or --live");
    }

    if (judgments.empty()) {
        std::cout << "skipped " << skipped << "\n";
        std::cout << "warning: no judgments could be formed\n";
        return 1;
    }

    if (!ef.judgments_out.empty()) {
        std::vector<json> rows;
        rows.reserve(judgments.size());
        for (const Judgment& g : judgments) rows.push_back(json(g));
        write_jsonl(ef.judgments_out, rows);
    }

    if (runs_r_ad || runs_r_ro) {
        MetricsReport report = aggregate(judgments, 0, ef.seed);
        std::cout << "eval_runs " << ef.eval_runs << "\n";
        std::cout << "n_conflicting " << report.n_conflicting << "\n";
        std::cout << "n_irrelevant " << report.n_irrelevant << "\n";
        std::cout << "n_total " << report.n_total << "\n";
        if (runs_r_ad) {
            std::cout << "r_ad " << fmt("%.3f", runs_r_ad->first) << "\n";
            std::cout << "r_ad_std " << fmt("%.17g", runs_r_ad->second) << "\n";
        }
        if (runs_r_ro) {
            std::cout << "r_ro " << fmt("%.3f", runs_r_ro->first) << "\n";
            std::cout << "r_ro_std " << fmt("%.17g", runs_r_ro->second) << "\n";
        }
    } else {
        MetricsReport report = aggregate(judgments, ef.bootstrap, ef.seed);
        print_metrics(report);
    }
    std::cout << "skipped " << skipped << "\n";

    if (ef.prior_bins > 0) {
        std::map<std::string, double> priors;
        for (const auto& [qid, alpha] : data.alphas_by_qid) {
            if (alpha.prior_logprob) priors[qid] = *alpha.prior_logprob;
        }
        try {
            std::vector<PriorBin> bins = prior_analysis(judgments, priors, ef.prior_bins);
            std::size_t idx = 0;
            for (const PriorBin& b : bins) {
                std::cout << "prior_bin " << idx++ << " low " << fmt("%.6f", b.low) << " high "
                          << fmt("%.6f", b.high) << " count " << b.count << " adherent "
                          << b.adherent << " rate " << fmt("%.3f", b.rate) << "\n";
            }
        } catch (const CapabilityError& e) {
            std::cout << "prior_analysis unavailable: " << e.what() << "\n";
        }
    }
    return 0;
}

int cmd_sweep(const CommonFlags& flags) {
    RunConfig cfg = resolve_config(flags);
    std::vector<SweepRow> rows = run_sweep(cfg);
    for (const SweepRow& row : rows) {
        if (!row.error.empty()) {
            std::cout << "sweep target=" << fmt("%g", row.target) << " unreachable: " << row.error
                      << "\n";
            continue;
        }
        auto count_of = [&](const char* key) {
            auto it = row.counts.find(key);
            return it == row.counts.end() ? std::size_t{0} : it->second;
        };
        std::cout << "sweep target=" << fmt("%g", row.target)
                  << " realized=" << fmt("%.6f", row.realized.value_or(0.0))
                  << " cf_overinclusion=" << count_of("cf_overinclusion")
                  << " cf_ignorance=" << count_of("cf_ignorance")
                  << " ir_overinclusion=" << count_of("ir_overinclusion")
                  << " dir=" << row.dir.string() << "\n";
    }
    return 0;
}

int cmd_leakage(const std::string& data_dir, const std::string& backend_spec,
                std::size_t max_new_tokens) {
    LoadedDataset data = load_dataset(data_dir);

    std::string spec = backend_spec;
    if (spec.empty() && data.run_manifest.contains("config")) {
        spec = data.run_manifest["config"].value("backend", "");
    }
    if (spec.empty()) {
        throw PreconditionError("leakage needs --backend (none found in the run manifest)");
    }
    auto backend = make_backend(spec, "default", "KCP_API_TOKEN");
    GatewayConfig gc;
    gc.cache_dir = fs::path(data_dir) / "cache";
    Gateway gateway(backend, gc);

    // One re-probe per question, against its primary conflict answer.
    std::map<std::string, ConflictAnswer> primary;
    for (const ConflictAnswer& c : data.conflicts) {
        primary.emplace(c.question_id, c);
    }
    std::vector<const QuestionRecord*> questions;
    for (const QuestionRecord& q : data.snapshot.questions()) questions.push_back(&q);

    LeakageResult result = leakage_check(gateway, questions, primary, max_new_tokens);
    std::cout << "leakage_rate " << fmt("%.3f", result.rate) << "\n";
    std::cout << "n_completed " << result.n_completed << "\n";
    std::cout << "n_matched " << result.n_matched << "\n";
    std::cout << "n_failed " << result.n_failed << "\n";
    return 0;
}

int cmd_stats(const std::vector<std::string>& dirs) {
    std::cout << "dataset num_conflicting num_irrelevant num_total\n";
    for (const std::string& dir : dirs) {
        fs::path p(dir);
        std::string name = p.filename().string();
        if (name.empty()) name = p.parent_path().filename().string();

        std::size_t cf = 0, ir = 0;
        fs::path contexts = p / "stages" / "contexts.jsonl";
        if (fs::exists(contexts)) {
            for_each_jsonl(contexts, [&](const json& row, std::size_t) {
                if (row.value("kind", "") == "irrelevant") ++ir;
                else ++cf;
            });
        } else {
            CorpusSnapshot snap = load_snapshot(p / "snapshot");
            cf = snap.destined_conflicting();
            ir = snap.destined_irrelevant();
        }
        std::cout << name << " " << cf << " " << ir << " " << (cf + ir) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"knowledge-conflict preference dataset pipeline"};
    app.require_subcommand(1);

    CommonFlags build_flags;
    CLI::App* build = app.add_subcommand("build", "build the dataset end to end");
    add_common(build, build_flags);

    std::string validate_dir = "out";
    CLI::App* validate = app.add_subcommand("validate", "re-check every dataset invariant");
    validate->add_option("--data", validate_dir, "build directory to validate");

    EvalFlags eval_flags;
    CLI::App* evaluate = app.add_subcommand("evaluate", "grade model outputs against the dataset");
    evaluate->add_option("--data", eval_flags.data_dir, "build directory");
    evaluate->add_option("--outputs", eval_flags.outputs_file,
                         "jsonl of {question_id, context_ref, response_text}");
    evaluate->add_flag("--live", eval_flags.live, "generate responses through a backend");
    evaluate->add_option("--backend", eval_flags.backend, "backend spec for --live");
    evaluate->add_option("--eval-runs", eval_flags.eval_runs,
                         "repeated-generation runs (live mode); std is across runs");
    evaluate->add_option("--temperature", eval_flags.temperature, "sampling temperature for --live");
    evaluate->add_option("--bootstrap", eval_flags.bootstrap,
                         "bootstrap repeats for the rate std (0 disables)");
    evaluate->add_option("--seed", eval_flags.seed, "bootstrap seed");
    evaluate->add_option("--prior-bins", eval_flags.prior_bins,
                         "equal-width prior bins (0 disables the analysis)");
    evaluate->add_option("--max-new-tokens", eval_flags.max_new_tokens, "generation budget");
    evaluate->add_option("--judgments", eval_flags.judgments_out,
                         "write per-item judgments to this jsonl file");

    CommonFlags sweep_flags;
    CLI::App* sweep = app.add_subcommand("sweep-ratio",
                                         "re-assemble the dataset at each configured ratio");
    add_common(sweep, sweep_flags);

    std::string leakage_dir = "out";
    std::string leakage_backend;
    std::size_t leakage_tokens = 256;
    CLI::App* leakage = app.add_subcommand("leakage",
                                           "closed-book re-probe for conflict answer leakage");
    leakage->add_option("--data", leakage_dir, "build directory");
    leakage->add_option("--backend", leakage_backend, "backend spec");
    leakage->add_option("--max-new-tokens", leakage_tokens, "generation budget");

    std::vector<std::string> stats_dirs;
    CLI::App* stats = app.add_subcommand("stats", "context counts per dataset directory");
    stats->add_option("dirs", stats_dirs, "build directories")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (build->parsed()) return cmd_build(build_flags);
        if (validate->parsed()) return cmd_validate(validate_dir);
        if (evaluate->parsed()) return cmd_evaluate(eval_flags);
        if (sweep->parsed()) return cmd_sweep(sweep_flags);
        if (leakage->parsed()) return cmd_leakage(leakage_dir, leakage_backend, leakage_tokens);
        if (stats->parsed()) return cmd_stats(stats_dirs);
    } catch (const kcp::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
