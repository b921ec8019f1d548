#include "kcp/context.hpp"

#include <algorithm>

#include "kcp/errors.hpp"
#include "kcp/rng.hpp"
#include "kcp/text.hpp"

namespace kcp {

namespace {

// A distractor is unusable if the question's annotations say it answers the
// question, or if any gold answer / the conflict answer occurs inside it.
bool can_answer(const Document& doc, const QuestionRecord& q, const std::string& conflict_text) {
    auto it = q.answerable.find(doc.doc_id);
    if (it != q.answerable.end() && it->second) return true;
    for (const std::string& a : q.realistic_answers) {
        if (normalized_contains(doc.text, a)) return true;
    }
    if (!conflict_text.empty() && normalized_contains(doc.text, conflict_text)) return true;
    return false;
}

ContextPackage shuffle_package(ContextPackage pkg, std::vector<Document> canonical,
                               std::uint64_t shuffle_seed, std::size_t evidence_canonical) {
    pkg.shuffle_seed = shuffle_seed;
    for (const Document& d : canonical) pkg.audit.canonical_doc_ids.push_back(d.doc_id);

    std::vector<std::size_t> order(canonical.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    seeded_shuffle(order, shuffle_seed);

    pkg.docs.reserve(canonical.size());
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        if (pkg.kind == ContextKind::conflicting && order[pos] == evidence_canonical) {
            pkg.evidence_position = pos;
        }
        pkg.docs.push_back(std::move(canonical[order[pos]]));
    }
    return pkg;
}

}  // namespace

Document substitute_answer(const Document& evidence,
                           const std::vector<std::string>& realistic_answers,
                           const std::string& primary_real, const std::string& a_ctf) {
    Document out = evidence;
    out.doc_id = evidence.doc_id + "#ctf";
    out.origin = DocOrigin::substituted;

    // Longest variants first so "Joe Biden" is rewritten before "Biden"
    // can match inside what remains.
    std::vector<std::string> variants = realistic_answers;
    std::sort(variants.begin(), variants.end(), [](const std::string& a, const std::string& b) {
        if (a.size() != b.size()) return a.size() > b.size();
        return a < b;
    });

    std::size_t total = 0;
    for (const std::string& v : variants) {
        if (v.empty()) continue;
        total += ci_replace_word(out.text, v, a_ctf);
    }
    if (total == 0) {
        throw GenerationRejectedError("substitute_answer: no occurrence of any realistic answer in " +
                                      evidence.doc_id);
    }
    for (const std::string& v : variants) {
        if (v.empty()) continue;
        if (normalize_answer(v) == normalize_answer(a_ctf)) continue;
        if (normalized_contains(out.text, v)) {
            throw GenerationRejectedError("substitute_answer: residual occurrence of \"" + v +
                                          "\" survives substitution in " + evidence.doc_id);
        }
    }
    out.substitution = Substitution{primary_real, a_ctf, total};
    return out;
}

std::string serialize_context(const std::vector<Document>& docs) {
    std::string out;
    for (const Document& d : docs) {
        if (!out.empty()) out += "\n\n";
        out += d.title;
        out += "\n";
        out += d.text;
    }
    return out;
}

ContextPackage build_conflicting(const QuestionRecord& question, const ConflictAnswer& conflict,
                                 const CorpusSnapshot& snapshot, std::uint64_t seed,
                                 const SimilarityScorer& scorer, const ContextOptions& options) {
    if (!question.evidence_doc_id) {
        throw PreconditionError("build_conflicting: question " + question.question_id +
                                " has no evidence document");
    }
    if (options.k_docs < 1) throw PreconditionError("build_conflicting: k_docs must be >= 1");
    const Document* evidence_src = snapshot.find_document(*question.evidence_doc_id);
    if (!evidence_src) {
        throw ValidationError("build_conflicting: evidence document " + *question.evidence_doc_id +
                              " not in snapshot");
    }

    ContextPackage pkg;
    pkg.question_id = question.question_id;
    pkg.kind = ContextKind::conflicting;
    pkg.context_id = question.question_id + "/cf" + options.id_suffix;

    Document evidence = *evidence_src;
    if (conflict.kind == ConflictKind::counterfactual) {
        evidence = substitute_answer(evidence, question.realistic_answers, conflict.source_real,
                                     conflict.text);
        pkg.audit.notes.push_back("evidence substituted: " + std::to_string(
                                      evidence.substitution->replacements) + " replacement(s)");
    } else {
        if (!normalized_contains(evidence.text, conflict.text)) {
            throw GenerationRejectedError("build_conflicting: realistic conflict answer \"" +
                                          conflict.text + "\" does not occur in evidence document " +
                                          evidence.doc_id);
        }
        pkg.audit.notes.push_back("evidence used verbatim (realistic conflict)");
    }

    // 1 evidence + 1 same-topic + (K-2) different-topic. The rankings give
    // a total order; we walk them and keep the first documents that survive
    // the answerability screen.
    std::size_t want_same = options.k_docs >= 2 ? 1 : 0;
    std::size_t want_diff = options.k_docs - 1 - want_same;

    std::vector<Document> canonical;
    canonical.push_back(std::move(evidence));
    std::set<std::string> used{*question.evidence_doc_id};

    if (want_same > 0) {
        std::vector<std::string> ranked =
            rank_neighbors(snapshot, *question.evidence_doc_id, true, used, scorer);
        const Document* pick = nullptr;
        for (const std::string& id : ranked) {
            const Document& cand = *snapshot.find_document(id);
            if (can_answer(cand, question, conflict.text)) continue;
            pick = &cand;
            break;
        }
        if (!pick) {
            throw InsufficientCandidatesError("build_conflicting: question " +
                                              question.question_id +
                                              ": no usable same-topic distractor");
        }
        canonical.push_back(*pick);
        used.insert(pick->doc_id);
        pkg.audit.notes.push_back("same-topic distractor: " + pick->doc_id);
    }

    if (want_diff > 0) {
        std::vector<std::string> ranked =
            rank_neighbors(snapshot, *question.evidence_doc_id, false, used, scorer);
        for (const std::string& id : ranked) {
            if (canonical.size() >= options.k_docs) break;
            const Document& cand = *snapshot.find_document(id);
            if (cand.title == question.title) continue;
            if (can_answer(cand, question, conflict.text)) continue;
            canonical.push_back(cand);
            used.insert(cand.doc_id);
            pkg.audit.notes.push_back("different-topic distractor: " + cand.doc_id);
        }
        if (canonical.size() < options.k_docs) {
            throw InsufficientCandidatesError(
                "build_conflicting: question " + question.question_id + ": need " +
                std::to_string(options.k_docs) + " docs, found " +
                std::to_string(canonical.size()));
        }
    }

    std::uint64_t shuffle_seed = derive_seed(seed, "ctx/" + pkg.context_id);
    return shuffle_package(std::move(pkg), std::move(canonical), shuffle_seed, 0);
}

ContextPackage build_irrelevant(const QuestionRecord& question, const CorpusSnapshot& snapshot,
                                std::uint64_t seed, const SimilarityScorer& scorer,
                                const ContextOptions& options) {
    if (options.k_docs < 2) throw PreconditionError("build_irrelevant: k_docs must be >= 2");

    ContextPackage pkg;
    pkg.question_id = question.question_id;
    pkg.kind = ContextKind::irrelevant;
    pkg.context_id = question.question_id + "/ir" + options.id_suffix;

    std::size_t want_hard = options.k_docs / 2;
    std::size_t want_easy = options.k_docs - want_hard;

    // Annotated hard candidates; std::map iteration gives ascending doc_id.
    std::vector<std::string> hard_pool;
    for (const auto& [doc_id, answers] : question.answerable) {
        if (!answers && snapshot.find_document(doc_id)) hard_pool.push_back(doc_id);
    }

    if (hard_pool.size() < want_hard && options.hard_fallback) {
        // Same-title documents that cannot contain a gold answer stand in
        // for missing annotations, most similar to the question first.
        struct Cand {
            double score;
            const std::string* id;
        };
        std::vector<Cand> fallback;
        for (std::size_t i = 0; i < snapshot.documents().size(); ++i) {
            const Document& d = snapshot.documents()[i];
            if (d.title != question.title) continue;
            if (std::find(hard_pool.begin(), hard_pool.end(), d.doc_id) != hard_pool.end()) continue;
            auto it = question.answerable.find(d.doc_id);
            if (it != question.answerable.end() && it->second) continue;
            bool contains_answer = false;
            for (const std::string& a : question.realistic_answers) {
                if (normalized_contains(d.text, a)) {
                    contains_answer = true;
                    break;
                }
            }
            if (contains_answer) continue;
            fallback.push_back({scorer.score_query(snapshot, i, question.question), &d.doc_id});
        }
        std::sort(fallback.begin(), fallback.end(), [](const Cand& a, const Cand& b) {
            if (a.score != b.score) return a.score > b.score;
            return *a.id < *b.id;
        });
        for (const Cand& c : fallback) {
            if (hard_pool.size() >= want_hard) break;
            hard_pool.push_back(*c.id);
            pkg.audit.notes.push_back("hard fallback: " + *c.id);
        }
    }

    if (hard_pool.size() < want_hard) {
        throw InsufficientCandidatesError(
            "build_irrelevant: question " + question.question_id + ": need " +
            std::to_string(want_hard) + " hard docs, have " + std::to_string(hard_pool.size()) +
            (options.hard_fallback ? " (fallback exhausted)" : " (hard fallback disabled)"));
    }

    // More annotated candidates than slots: seeded pick, stable per run.
    if (hard_pool.size() > want_hard) {
        seeded_shuffle(hard_pool, derive_seed(seed, "hard/" + pkg.context_id));
        hard_pool.resize(want_hard);
        std::sort(hard_pool.begin(), hard_pool.end());
    }

    std::vector<Document> canonical;
    std::set<std::string> used;
    for (const std::string& id : hard_pool) {
        canonical.push_back(*snapshot.find_document(id));
        used.insert(id);
    }

    // Easy docs: unrelated titles, never annotated answerable, and never
    // carrying a gold answer when the question has them.
    std::vector<std::string> easy_pool;
    for (const Document& d : snapshot.documents()) {
        if (used.count(d.doc_id)) continue;
        if (d.title == question.title) continue;
        auto it = question.answerable.find(d.doc_id);
        if (it != question.answerable.end() && it->second) continue;
        bool contains_answer = false;
        for (const std::string& a : question.realistic_answers) {
            if (normalized_contains(d.text, a)) {
                contains_answer = true;
                break;
            }
        }
        if (contains_answer) continue;
        easy_pool.push_back(d.doc_id);
    }
    if (easy_pool.size() < want_easy) {
        throw InsufficientCandidatesError("build_irrelevant: question " + question.question_id +
                                          ": need " + std::to_string(want_easy) +
                                          " easy docs, have " + std::to_string(easy_pool.size()));
    }
    if (options.easy_mode == EasyDocMode::random_seeded) {
        seeded_shuffle(easy_pool, derive_seed(seed, "easy/" + pkg.context_id));
        easy_pool.resize(want_easy);
    } else {
        struct Cand {
            double score;
            std::string id;
        };
        std::vector<Cand> scored;
        scored.reserve(easy_pool.size());
        for (const std::string& id : easy_pool) {
            scored.push_back(
                {scorer.score_query(snapshot, snapshot.doc_index(id), question.question), id});
        }
        std::sort(scored.begin(), scored.end(), [](const Cand& a, const Cand& b) {
            if (a.score != b.score) return a.score < b.score;
            return a.id < b.id;
        });
        easy_pool.clear();
        for (std::size_t i = 0; i < want_easy; ++i) easy_pool.push_back(scored[i].id);
    }
    for (const std::string& id : easy_pool) {
        canonical.push_back(*snapshot.find_document(id));
        pkg.audit.notes.push_back("easy doc: " + id);
    }

    std::uint64_t shuffle_seed = derive_seed(seed, "ctx/" + pkg.context_id);
    return shuffle_package(std::move(pkg), std::move(canonical), shuffle_seed, SIZE_MAX);
}

std::string to_string(ContextKind k) {
    return k == ContextKind::conflicting ? "conflicting" : "irrelevant";
}

ContextKind context_kind_from_string(const std::string& s) {
    if (s == "conflicting") return ContextKind::conflicting;
    if (s == "irrelevant") return ContextKind::irrelevant;
    throw ValidationError("unknown context kind: " + s);
}

void to_json(json& j, const ContextPackage& c) {
    j = json{{"context_id", c.context_id},
             {"question_id", c.question_id},
             {"kind", to_string(c.kind)},
             {"docs", c.docs},
             {"shuffle_seed", c.shuffle_seed},
             {"audit",
              {{"canonical_doc_ids", c.audit.canonical_doc_ids}, {"notes", c.audit.notes}}}};
    if (c.evidence_position) j["evidence_position"] = *c.evidence_position;
}

void from_json(const json& j, ContextPackage& c) {
    c.context_id = j.at("context_id").get<std::string>();
    c.question_id = j.at("question_id").get<std::string>();
    c.kind = j.value("kind", "conflicting") == "irrelevant" ? ContextKind::irrelevant
                                                            : ContextKind::conflicting;
    c.docs = j.at("docs").get<std::vector<Document>>();
    c.shuffle_seed = j.value("shuffle_seed", std::uint64_t{0});
    if (j.contains("evidence_position") && !j["evidence_position"].is_null()) {
        c.evidence_position = j["evidence_position"].get<std::size_t>();
    } else {
        c.evidence_position.reset();
    }
    c.audit = {};
    if (j.contains("audit")) {
        c.audit.canonical_doc_ids =
            j["audit"].value("canonical_doc_ids", std::vector<std::string>{});
        c.audit.notes = j["audit"].value("notes", std::vector<std::string>{});
    }
}

}  // namespace kcp
