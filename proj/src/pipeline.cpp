#include "kcp/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <memory>
#include <sstream>

#include "kcp/errors.hpp"
#include "kcp/gateway.hpp"
#include "kcp/parallel.hpp"
#include "kcp/rng.hpp"
#include "kcp/text.hpp"

namespace kcp {

LockFile::LockFile(const std::filesystem::path& path) : path_(path) {
    fd_ = ::open(path.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
        throw PreconditionError("output directory is locked by another run (" + path.string() +
                                " exists); remove the stale lock file if no build is running");
    }
    std::string pid = std::to_string(::getpid()) + "\n";
    ssize_t rc = ::write(fd_, pid.data(), pid.size());
    (void)rc;
}

LockFile::~LockFile() {
    if (fd_ >= 0) {
        ::close(fd_);
        ::unlink(path_.c_str());
    }
}

namespace {

namespace fs = std::filesystem;

enum class Regime { conflicting, irrelevant, skipped };

struct QuarantineRecord {
    std::string stage;
    std::string id;
    std::string reason;
};

void write_quarantine(const fs::path& dir, const std::string& stage,
                      const std::vector<QuarantineRecord>& records) {
    std::vector<json> rows;
    rows.reserve(records.size());
    for (const QuarantineRecord& r : records) {
        rows.push_back(json{{"stage", r.stage}, {"id", r.id}, {"reason", r.reason}});
    }
    write_jsonl(dir / (stage + ".jsonl"), rows);
}

void write_marker(const fs::path& path, const StageStatus& s) {
    json m{{"stage", s.name},
           {"stage_key", s.stage_key},
           {"output_hash", s.output_hash},
           {"processed", s.processed},
           {"quarantined", s.quarantined}};
    write_file(path, m.dump(2) + "\n");
}

// Marker matches the expected key: fill the status from it and report
// reusable. The output file's hash is verified separately by the caller.
bool read_marker(const fs::path& path, const std::string& expect_key, StageStatus& s) {
    if (!fs::exists(path)) return false;
    json m;
    try {
        m = json::parse(read_file(path));
    } catch (...) {
        return false;
    }
    if (m.value("stage_key", "") != expect_key) return false;
    s.output_hash = m.value("output_hash", "");
    s.processed = m.value("processed", std::size_t{0});
    s.quarantined = m.value("quarantined", std::size_t{0});
    s.reused = true;
    return true;
}

std::unique_ptr<Gateway> make_gateway(const RunConfig& cfg, const std::string& stage) {
    auto backend = make_backend(cfg.backend_for(stage), cfg.backend_model, cfg.backend_auth_env);
    GatewayConfig gc;
    gc.cache_dir = cfg.effective_cache_dir();
    gc.max_parallel = static_cast<int>(cfg.parallelism);
    gc.retry_attempts = static_cast<int>(cfg.retry_attempts);
    return std::make_unique<Gateway>(std::move(backend), gc);
}

void enforce_threshold(const RunConfig& cfg, const StageStatus& s) {
    std::size_t attempts = s.processed + s.quarantined;
    if (attempts == 0) return;
    double fraction = static_cast<double>(s.quarantined) / static_cast<double>(attempts);
    if (fraction > cfg.quarantine_threshold) {
        std::ostringstream msg;
        msg.precision(4);
        msg << "stage " << s.name << ": quarantine fraction " << fraction << " exceeds threshold "
            << cfg.quarantine_threshold << " (" << s.quarantined << " of " << attempts
            << " records); artifacts were written for inspection";
        throw ValidationError(msg.str());
    }
}

Regime assign_regime(const QuestionRecord& q, const ParameterAnswer& alpha,
                     const CorpusSnapshot& snapshot, const RunConfig& cfg) {
    bool eligible_cf = q.conflicting_destined();
    std::size_t want_hard = cfg.k_docs / 2;
    std::size_t hard = 0;
    for (const auto& [doc_id, answers] : q.answerable) {
        if (!answers && snapshot.find_document(doc_id)) ++hard;
    }
    // An abstained probe has nothing to hold on to under an irrelevant
    // context, so those questions only qualify for the conflicting side.
    bool eligible_ir = !alpha.abstained && (hard >= want_hard || cfg.hard_fallback);
    if (eligible_cf && eligible_ir) {
        SplitMix64 rng(derive_seed(cfg.seed, "regime/" + q.question_id));
        return rng.unit() < cfg.conflicting_fraction ? Regime::conflicting : Regime::irrelevant;
    }
    if (eligible_cf) return Regime::conflicting;
    if (eligible_ir) return Regime::irrelevant;
    return Regime::skipped;
}

}  // namespace

BuildOutcome run_build(const RunConfig& config) {
    fs::create_directories(config.out_dir);
    const fs::path stages_dir = config.out_dir / "stages";
    const fs::path quarantine_dir = config.out_dir / "quarantine";
    fs::create_directories(stages_dir);
    fs::create_directories(quarantine_dir);
    fs::create_directories(config.effective_cache_dir());
    LockFile lock(config.out_dir / ".lock");

    BuildOutcome outcome;

    // ---- ingest ----
    CorpusSnapshot snapshot;
    std::string ingest_hash;
    {
        StageStatus st;
        st.name = "ingest";
        st.stage_key = ContentHash()
                           .add("ingest")
                           .add(file_hash_hex(config.corpus_path))
                           .add(config.corpus_format)
                           .hex();
        bool reused = false;
        if (read_marker(stages_dir / "ingest.done.json", st.stage_key, st)) {
            try {
                snapshot = load_snapshot(config.out_dir / "snapshot");
                reused = snapshot.snapshot_id() == st.output_hash;
            } catch (const Error&) {
                reused = false;
            }
        }
        if (!reused) {
            st.reused = false;
            snapshot =
                ingest_corpus(config.corpus_path, corpus_format_from_string(config.corpus_format));
            persist_snapshot(snapshot, config.out_dir / "snapshot");
            std::vector<QuarantineRecord> qs;
            for (const RejectRecord& r : snapshot.rejects()) {
                qs.push_back({"ingest", r.id, r.reason});
            }
            write_quarantine(quarantine_dir, "ingest", qs);
            st.output_hash = snapshot.snapshot_id();
            st.processed = snapshot.questions().size() + snapshot.documents().size();
            st.quarantined = snapshot.rejects().size();
            write_marker(stages_dir / "ingest.done.json", st);
        }
        ingest_hash = st.output_hash;
        outcome.snapshot_id = snapshot.snapshot_id();
        outcome.stages.push_back(st);
        enforce_threshold(config, st);
    }

    // ---- probe ----
    std::map<std::string, ParameterAnswer> alphas;
    std::string probe_hash;
    {
        auto gw = make_gateway(config, "probe");
        StageStatus st;
        st.name = "probe";
        st.stage_key = ContentHash()
                           .add("probe")
                           .add(ingest_hash)
                           .add(gw->backend_id())
                           .add_bool(config.score_prior)
                           .add(config.prior_prompt)
                           .add_u64(config.max_new_tokens)
                           .hex();
        const fs::path out_path = stages_dir / "probe.jsonl";
        bool reused = read_marker(stages_dir / "probe.done.json", st.stage_key, st) &&
                      fs::exists(out_path) && file_hash_hex(out_path) == st.output_hash;
        if (reused) {
            for (const json& row : read_jsonl(out_path)) {
                ParameterAnswer a = row.get<ParameterAnswer>();
                alphas.emplace(a.question_id, std::move(a));
            }
        } else {
            st.reused = false;
            ProbeOptions popts;
            popts.score_prior = config.score_prior;
            popts.prior_on_bare_question = config.prior_prompt == "bare";
            popts.max_new_tokens = static_cast<int>(config.max_new_tokens);
            const auto& questions = snapshot.questions();
            struct Slot {
                std::optional<ParameterAnswer> answer;
                std::string error;
            };
            std::vector<Slot> slots =
                parallel_map<Slot>(questions.size(), config.parallelism, [&](std::size_t i) {
                    Slot s;
                    try {
                        s.answer = probe_question(questions[i], *gw, popts);
                    } catch (const Error& e) {
                        s.error = e.what();
                    }
                    return s;
                });
            std::vector<json> rows;
            std::vector<QuarantineRecord> qs;
            for (std::size_t i = 0; i < questions.size(); ++i) {
                if (slots[i].answer) {
                    rows.push_back(json(*slots[i].answer));
                    alphas.emplace(questions[i].question_id, std::move(*slots[i].answer));
                } else {
                    qs.push_back({"probe", questions[i].question_id, slots[i].error});
                }
            }
            write_jsonl(out_path, rows);
            write_quarantine(quarantine_dir, "probe", qs);
            st.output_hash = file_hash_hex(out_path);
            st.processed = rows.size();
            st.quarantined = qs.size();
            write_marker(stages_dir / "probe.done.json", st);
        }
        probe_hash = st.output_hash;
        outcome.stages.push_back(st);
        enforce_threshold(config, st);
    }

    // ---- regime assignment (pure, recomputed every run) ----
    std::map<std::string, Regime> regimes;
    std::size_t regime_cf = 0, regime_ir = 0, regime_skipped = 0;
    for (const QuestionRecord& q : snapshot.questions()) {
        auto it = alphas.find(q.question_id);
        if (it == alphas.end()) continue;
        Regime r = assign_regime(q, it->second, snapshot, config);
        regimes.emplace(q.question_id, r);
        if (r == Regime::conflicting) ++regime_cf;
        else if (r == Regime::irrelevant) ++regime_ir;
        else ++regime_skipped;
    }

    // ---- forge (conflicting regime only) ----
    std::vector<ConflictAnswer> conflicts;
    std::string forge_hash;
    {
        auto gw = make_gateway(config, "forge");
        StageStatus st;
        st.name = "forge";
        st.stage_key = ContentHash()
                           .add("forge")
                           .add(probe_hash)
                           .add(gw->backend_id())
                           .add_u64(config.candidate_retries)
                           .add_double(config.temperature_max)
                           .add_u64(config.seed)
                           .add_double(config.conflicting_fraction)
                           .add_u64(config.k_docs)
                           .add_bool(config.hard_fallback)
                           .add_bool(config.emit_both_conflicts)
                           .hex();
        const fs::path out_path = stages_dir / "conflicts.jsonl";
        bool reused = read_marker(stages_dir / "forge.done.json", st.stage_key, st) &&
                      fs::exists(out_path) && file_hash_hex(out_path) == st.output_hash;
        if (reused) {
            for (const json& row : read_jsonl(out_path)) {
                conflicts.push_back(row.get<ConflictAnswer>());
            }
        } else {
            st.reused = false;
            std::vector<const QuestionRecord*> cf_questions;
            for (const QuestionRecord& q : snapshot.questions()) {
                auto it = regimes.find(q.question_id);
                if (it != regimes.end() && it->second == Regime::conflicting) {
                    cf_questions.push_back(&q);
                }
            }
            ForgeOptions fopts;
            fopts.candidate_retries = static_cast<int>(config.candidate_retries);
            fopts.temperature_max = config.temperature_max;
            struct Slot {
                std::vector<ConflictAnswer> found;
                std::string primary_error;
                std::string secondary_error;
            };
            std::vector<Slot> slots =
                parallel_map<Slot>(cf_questions.size(), config.parallelism, [&](std::size_t i) {
                    Slot s;
                    const QuestionRecord& q = *cf_questions[i];
                    const ParameterAnswer& alpha = alphas.at(q.question_id);
                    try {
                        ConflictAnswer primary = forge_conflict(q, alpha, *gw, fopts);
                        bool realistic = primary.kind == ConflictKind::realistic;
                        s.found.push_back(std::move(primary));
                        if (config.emit_both_conflicts && realistic) {
                            try {
                                s.found.push_back(forge_counterfactual(q, alpha, *gw, fopts));
                            } catch (const Error& e) {
                                s.secondary_error = e.what();
                            }
                        }
                    } catch (const Error& e) {
                        s.primary_error = e.what();
                    }
                    return s;
                });
            std::vector<json> rows;
            std::vector<QuarantineRecord> qs, secondary;
            for (std::size_t i = 0; i < cf_questions.size(); ++i) {
                const std::string& qid = cf_questions[i]->question_id;
                if (!slots[i].primary_error.empty()) {
                    qs.push_back({"forge", qid, slots[i].primary_error});
                    continue;
                }
                for (const ConflictAnswer& c : slots[i].found) rows.push_back(json(c));
                if (!slots[i].secondary_error.empty()) {
                    secondary.push_back({"forge", qid + "+ctf", slots[i].secondary_error});
                }
            }
            for (const json& row : rows) conflicts.push_back(row.get<ConflictAnswer>());
            write_jsonl(out_path, rows);
            write_quarantine(quarantine_dir, "forge", qs);
            write_quarantine(quarantine_dir, "forge_secondary", secondary);
            st.output_hash = file_hash_hex(out_path);
            st.processed = cf_questions.size() - qs.size();
            st.quarantined = qs.size();
            write_marker(stages_dir / "forge.done.json", st);
        }
        forge_hash = st.output_hash;
        outcome.stages.push_back(st);
        enforce_threshold(config, st);
    }

    std::map<std::string, std::vector<const ConflictAnswer*>> conflicts_grouped;
    for (const ConflictAnswer& c : conflicts) conflicts_grouped[c.question_id].push_back(&c);

    // ---- contexts ----
    std::vector<ContextPackage> contexts;
    std::string contexts_hash;
    {
        StageStatus st;
        st.name = "contexts";
        std::string scorer_tag = config.similarity;
        if (config.similarity == "embedding") {
            auto backend =
                make_backend(config.backend, config.backend_model, config.backend_auth_env);
            scorer_tag += ":" + backend->id();
        }
        st.stage_key = ContentHash()
                           .add("contexts")
                           .add(probe_hash)
                           .add(forge_hash)
                           .add(snapshot.snapshot_id())
                           .add_u64(config.seed)
                           .add_u64(config.k_docs)
                           .add_bool(config.hard_fallback)
                           .add(config.easy_doc_mode)
                           .add(scorer_tag)
                           .add_bool(config.emit_both_conflicts)
                           .hex();
        const fs::path out_path = stages_dir / "contexts.jsonl";
        bool reused = read_marker(stages_dir / "contexts.done.json", st.stage_key, st) &&
                      fs::exists(out_path) && file_hash_hex(out_path) == st.output_hash;
        if (reused) {
            for (const json& row : read_jsonl(out_path)) {
                contexts.push_back(row.get<ContextPackage>());
            }
        } else {
            st.reused = false;
            std::unique_ptr<Gateway> embed_gw;
            std::unique_ptr<SimilarityScorer> scorer;
            if (config.similarity == "embedding") {
                embed_gw = make_gateway(config, "embed");
                scorer = std::make_unique<EmbeddingScorer>(snapshot, *embed_gw);
            } else {
                scorer = std::make_unique<TermOverlapScorer>();
            }

            std::vector<const QuestionRecord*> qlist;
            for (const QuestionRecord& q : snapshot.questions()) {
                auto it = regimes.find(q.question_id);
                if (it != regimes.end() && it->second != Regime::skipped) qlist.push_back(&q);
            }
            ContextOptions base_opts;
            base_opts.k_docs = config.k_docs;
            base_opts.hard_fallback = config.hard_fallback;
            base_opts.easy_mode = config.easy_doc_mode == "least_similar"
                                      ? EasyDocMode::least_similar
                                      : EasyDocMode::random_seeded;
            struct Slot {
                std::vector<ContextPackage> pkgs;
                std::vector<QuarantineRecord> fails;
            };
            std::vector<Slot> slots =
                parallel_map<Slot>(qlist.size(), config.parallelism, [&](std::size_t i) {
                    Slot s;
                    const QuestionRecord& q = *qlist[i];
                    if (regimes.at(q.question_id) == Regime::conflicting) {
                        auto cit = conflicts_grouped.find(q.question_id);
                        if (cit == conflicts_grouped.end()) return s;  // quarantined at forge
                        for (std::size_t ci = 0; ci < cit->second.size(); ++ci) {
                            ContextOptions opts = base_opts;
                            opts.id_suffix = ci == 0 ? "" : "+ctf";
                            try {
                                s.pkgs.push_back(build_conflicting(q, *cit->second[ci], snapshot,
                                                                   config.seed, *scorer, opts));
                            } catch (const Error& e) {
                                s.fails.push_back({"contexts",
                                                   q.question_id + "/cf" + opts.id_suffix,
                                                   e.what()});
                            }
                        }
                    } else {
                        try {
                            s.pkgs.push_back(build_irrelevant(q, snapshot, config.seed, *scorer,
                                                              base_opts));
                        } catch (const Error& e) {
                            s.fails.push_back({"contexts", q.question_id + "/ir", e.what()});
                        }
                    }
                    return s;
                });
            std::vector<json> rows;
            std::vector<QuarantineRecord> qs;
            for (Slot& s : slots) {
                for (ContextPackage& p : s.pkgs) {
                    rows.push_back(json(p));
                    contexts.push_back(std::move(p));
                }
                for (QuarantineRecord& f : s.fails) qs.push_back(std::move(f));
            }
            write_jsonl(out_path, rows);
            write_quarantine(quarantine_dir, "contexts", qs);
            st.output_hash = file_hash_hex(out_path);
            st.processed = contexts.size();
            st.quarantined = qs.size();
            write_marker(stages_dir / "contexts.done.json", st);
        }
        contexts_hash = st.output_hash;
        outcome.stages.push_back(st);
        enforce_threshold(config, st);
    }

    std::map<std::string, ConflictAnswer> by_ctx = conflicts_by_context(contexts, conflicts);

    // ---- negatives ----
    std::vector<NegativeSample> negatives;
    {
        auto gw = make_gateway(config, "negatives");
        StageStatus st;
        st.name = "negatives";
        st.stage_key = ContentHash()
                           .add("negatives")
                           .add(contexts_hash)
                           .add(probe_hash)
                           .add(forge_hash)
                           .add(gw->backend_id())
                           .add_u64(config.candidate_retries)
                           .add_double(config.temperature_max)
                           .hex();
        const fs::path out_path = stages_dir / "negatives.jsonl";
        bool reused = read_marker(stages_dir / "negatives.done.json", st.stage_key, st) &&
                      fs::exists(out_path) && file_hash_hex(out_path) == st.output_hash;
        if (reused) {
            for (const json& row : read_jsonl(out_path)) {
                negatives.push_back(row.get<NegativeSample>());
            }
        } else {
            st.reused = false;
            NegativeOptions nopts;
            nopts.candidate_retries = static_cast<int>(config.candidate_retries);
            nopts.temperature_max = config.temperature_max;
            struct Slot {
                std::vector<NegativeSample> found;
                std::vector<QuarantineRecord> fails;
            };
            std::vector<Slot> slots =
                parallel_map<Slot>(contexts.size(), config.parallelism, [&](std::size_t i) {
                    Slot s;
                    const ContextPackage& ctx = contexts[i];
                    const QuestionRecord* q = snapshot.find_question(ctx.question_id);
                    if (!q) return s;
                    const ParameterAnswer& alpha = alphas.at(ctx.question_id);
                    std::string potential;
                    if (ctx.kind == ContextKind::conflicting) {
                        auto cit = by_ctx.find(ctx.context_id);
                        if (cit == by_ctx.end()) return s;
                        potential = cit->second.text;
                    } else {
                        potential = alpha.alpha_text;
                    }
                    try {
                        s.found.push_back(sample_overinclusion(*q, ctx, potential, *gw, nopts));
                    } catch (const Error& e) {
                        s.fails.push_back(
                            {"negatives", ctx.context_id + "/overinclusion", e.what()});
                    }
                    if (ctx.kind == ContextKind::conflicting) {
                        if (auto ign = sample_ignorance(*q, ctx, alpha)) {
                            s.found.push_back(std::move(*ign));
                        }
                    }
                    return s;
                });
            std::vector<json> rows;
            std::vector<QuarantineRecord> qs;
            for (Slot& s : slots) {
                for (NegativeSample& n : s.found) {
                    rows.push_back(json(n));
                    negatives.push_back(std::move(n));
                }
                for (QuarantineRecord& f : s.fails) qs.push_back(std::move(f));
            }
            write_jsonl(out_path, rows);
            write_quarantine(quarantine_dir, "negatives", qs);
            st.output_hash = file_hash_hex(out_path);
            st.processed = negatives.size();
            st.quarantined = qs.size();
            write_marker(stages_dir / "negatives.done.json", st);
        }
        outcome.stages.push_back(st);
        enforce_threshold(config, st);
    }

    // ---- assemble + export (always recomputed; ratio is a run parameter) ----
    AssembleInputs inputs;
    inputs.questions.reserve(snapshot.questions().size());
    for (const QuestionRecord& q : snapshot.questions()) inputs.questions.push_back(&q);
    inputs.contexts = contexts;
    inputs.negatives = negatives;
    inputs.conflicts_by_ctx = by_ctx;
    inputs.alphas_by_qid = alphas;

    AssembleConfig acfg;
    acfg.r_error_target = config.r_error;
    acfg.seed = config.seed;
    acfg.length_tolerance = config.length_tolerance;
    AssembleResult assembled = assemble_pairs(inputs, acfg);

    json extra{{"snapshot_id", snapshot.snapshot_id()}, {"seed", config.seed}};
    outcome.exports =
        export_training(assembled, config.export_formats, config.out_dir / "export", extra);
    outcome.report = assembled.report;

    // ---- statistics + run manifest (content-derived only, no timestamps) ----
    std::size_t ctx_cf = 0, ctx_ir = 0;
    for (const ContextPackage& c : contexts) {
        (c.kind == ContextKind::conflicting ? ctx_cf : ctx_ir)++;
    }
    std::size_t n_realistic = 0, n_counterfactual = 0;
    for (const ConflictAnswer& c : conflicts) {
        (c.kind == ConflictKind::realistic ? n_realistic : n_counterfactual)++;
    }
    std::size_t neg_over = 0, neg_ign = 0;
    for (const NegativeSample& n : negatives) {
        (n.error_type == NegErrorType::overinclusion ? neg_over : neg_ign)++;
    }
    std::size_t ignorance_skipped = 0;
    for (const ContextPackage& c : contexts) {
        if (c.kind == ContextKind::conflicting && alphas.count(c.question_id) &&
            alphas.at(c.question_id).abstained) {
            ++ignorance_skipped;
        }
    }
    std::size_t secondary_failures = 0;
    if (fs::exists(quarantine_dir / "forge_secondary.jsonl")) {
        secondary_failures = read_jsonl(quarantine_dir / "forge_secondary.jsonl").size();
    }

    json stats;
    stats["questions"] = snapshot.questions().size();
    stats["documents"] = snapshot.documents().size();
    stats["regime"] = json{{"conflicting", regime_cf},
                           {"irrelevant", regime_ir},
                           {"skipped", regime_skipped}};
    stats["conflicts"] = json{{"realistic", n_realistic},
                              {"counterfactual", n_counterfactual},
                              {"secondary_failures", secondary_failures}};
    stats["contexts"] = json{{"num_conflicting", ctx_cf},
                             {"num_irrelevant", ctx_ir},
                             {"num_total", contexts.size()}};
    stats["negatives"] = json{{"overinclusion", neg_over},
                              {"ignorance", neg_ign},
                              {"ignorance_skipped_abstained", ignorance_skipped}};
    stats["preference_pairs"] = assembled.pairs.size();
    stats["sft_examples"] = assembled.sft.size();
    outcome.statistics = stats;

    json manifest;
    manifest["snapshot_id"] = snapshot.snapshot_id();
    manifest["config"] = config_to_json(config);
    json stage_rows = json::array();
    for (const StageStatus& s : outcome.stages) {
        stage_rows.push_back(json{{"name", s.name},
                                  {"stage_key", s.stage_key},
                                  {"output_hash", s.output_hash},
                                  {"processed", s.processed},
                                  {"quarantined", s.quarantined}});
    }
    manifest["stages"] = stage_rows;
    manifest["balance_report"] = assembled.report;
    manifest["statistics"] = stats;
    json export_manifest = json::parse(read_file(outcome.exports.manifest));
    manifest["exports"] = json{{"dir", "export"}, {"files", export_manifest.value("files", json::object())}};
    outcome.manifest_path = config.out_dir / "run_manifest.json";
    write_file(outcome.manifest_path, manifest.dump(2) + "\n");
    return outcome;
}

std::vector<SweepRow> run_sweep(const RunConfig& config) {
    try {
        run_build(config);
    } catch (const RatioUnreachableError&) {
        // The configured base ratio may itself be unreachable; the stages
        // are built and cached, which is all the sweep needs.
    }
    LoadedDataset data = load_dataset(config.out_dir);
    AssembleInputs inputs = make_assemble_inputs(data);

    std::vector<SweepRow> rows;
    for (double target : config.sweep_targets) {
        SweepRow row;
        row.target = target;
        char label[32];
        std::snprintf(label, sizeof(label), "%g", target);
        row.dir = config.out_dir / "sweep" / (std::string("r_") + label);

        AssembleConfig acfg;
        acfg.r_error_target = target;
        acfg.seed = config.seed;
        acfg.length_tolerance = config.length_tolerance;
        try {
            AssembleResult res = assemble_pairs(inputs, acfg);
            json extra{{"snapshot_id", data.snapshot.snapshot_id()}, {"seed", config.seed}};
            export_training(res, config.export_formats, row.dir, extra);
            row.realized = res.report.realized_ratio;
            row.counts = res.report.counts;
        } catch (const RatioUnreachableError& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

LoadedDataset load_dataset(const std::filesystem::path& out_dir) {
    LoadedDataset d;
    auto require = [&](const fs::path& p) {
        if (!fs::exists(p)) {
            throw ValidationError("load_dataset: missing " + p.string() +
                                  "; is this a completed build directory?");
        }
    };
    require(out_dir / "snapshot" / "manifest.json");
    d.snapshot = load_snapshot(out_dir / "snapshot");

    const fs::path stages = out_dir / "stages";
    require(stages / "probe.jsonl");
    require(stages / "conflicts.jsonl");
    require(stages / "contexts.jsonl");
    require(stages / "negatives.jsonl");

    for (const json& row : read_jsonl(stages / "probe.jsonl")) {
        ParameterAnswer a = row.get<ParameterAnswer>();
        d.alphas_by_qid.emplace(a.question_id, std::move(a));
    }
    for (const json& row : read_jsonl(stages / "conflicts.jsonl")) {
        d.conflicts.push_back(row.get<ConflictAnswer>());
    }
    for (const json& row : read_jsonl(stages / "contexts.jsonl")) {
        d.contexts.push_back(row.get<ContextPackage>());
    }
    for (const json& row : read_jsonl(stages / "negatives.jsonl")) {
        d.negatives.push_back(row.get<NegativeSample>());
    }
    if (fs::exists(out_dir / "run_manifest.json")) {
        d.run_manifest = json::parse(read_file(out_dir / "run_manifest.json"));
    }
    return d;
}

std::map<std::string, ConflictAnswer> conflicts_by_context(
    const std::vector<ContextPackage>& contexts, const std::vector<ConflictAnswer>& conflicts) {
    std::map<std::string, std::vector<const ConflictAnswer*>> grouped;
    for (const ConflictAnswer& c : conflicts) grouped[c.question_id].push_back(&c);

    std::map<std::string, ConflictAnswer> out;
    for (const ContextPackage& ctx : contexts) {
        if (ctx.kind != ContextKind::conflicting) continue;
        auto it = grouped.find(ctx.question_id);
        if (it == grouped.end()) continue;
        const std::string base = ctx.question_id + "/cf";
        std::size_t idx = ctx.context_id.size() > base.size() ? 1 : 0;
        if (idx < it->second.size()) out.emplace(ctx.context_id, *it->second[idx]);
    }
    return out;
}

AssembleInputs make_assemble_inputs(const LoadedDataset& data) {
    AssembleInputs inputs;
    inputs.questions.reserve(data.snapshot.questions().size());
    for (const QuestionRecord& q : data.snapshot.questions()) inputs.questions.push_back(&q);
    inputs.contexts = data.contexts;
    inputs.negatives = data.negatives;
    inputs.conflicts_by_ctx = conflicts_by_context(data.contexts, data.conflicts);
    inputs.alphas_by_qid = data.alphas_by_qid;
    return inputs;
}

}  // namespace kcp
