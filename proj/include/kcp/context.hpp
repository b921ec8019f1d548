#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kcp/conflict.hpp"
#include "kcp/corpus.hpp"

namespace kcp {

enum class ContextKind { conflicting, irrelevant };

struct ContextAudit {
    // Document ids in construction order, before the seeded shuffle.
    std::vector<std::string> canonical_doc_ids;
    std::vector<std::string> notes;
};

struct ContextPackage {
    std::string context_id;  // "<question_id>/cf" or "<question_id>/ir"
    std::string question_id;
    ContextKind kind;
    std::vector<Document> docs;  // exactly K after the shuffle
    // Index of the evidence document after the shuffle; conflicting only.
    std::optional<std::size_t> evidence_position;
    std::uint64_t shuffle_seed = 0;
    ContextAudit audit;
};

enum class EasyDocMode { random_seeded, least_similar };

struct ContextOptions {
    std::size_t k_docs = 4;
    // When the corpus lacks enough annotated hard documents, allow falling
    // back to same-topic documents that fail answer containment.
    bool hard_fallback = false;
    EasyDocMode easy_mode = EasyDocMode::random_seeded;
    // Distinguishes contexts when a question carries several conflict
    // answers (emit-both mode).
    std::string id_suffix;
};

// Conflicting context: the evidence document (substituted for
// counterfactual conflicts, untouched otherwise), one same-topic distractor
// and K-2 different-topic distractors, all screened so they cannot answer
// the question, then shuffled with a seed derived from (seed, question_id).
ContextPackage build_conflicting(const QuestionRecord& question, const ConflictAnswer& conflict,
                                 const CorpusSnapshot& snapshot, std::uint64_t seed,
                                 const SimilarityScorer& scorer, const ContextOptions& options = {});

// Irrelevant context: floor(K/2) hard documents (same topic, annotated
// unanswerable) and the rest easy documents on unrelated topics, shuffled
// with a seed derived from (seed, question_id).
ContextPackage build_irrelevant(const QuestionRecord& question, const CorpusSnapshot& snapshot,
                                std::uint64_t seed, const SimilarityScorer& scorer,
                                const ContextOptions& options = {});

// Replaces every occurrence of every realistic-answer variant (longest
// first, case-insensitive, whole-word) with a_ctf and verifies nothing
// survives. Throws GenerationRejectedError when no replacement is possible
// or a residual occurrence remains.
Document substitute_answer(const Document& evidence, const std::vector<std::string>& realistic_answers,
                           const std::string& primary_real, const std::string& a_ctf);

// The one serialization every prompt uses: documents joined with blank
// lines, each prefixed by its title on its own line.
std::string serialize_context(const std::vector<Document>& docs);

std::string to_string(ContextKind k);
ContextKind context_kind_from_string(const std::string& s);

void to_json(json& j, const ContextPackage& c);
void from_json(const json& j, ContextPackage& c);

}  // namespace kcp
