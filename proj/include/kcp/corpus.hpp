#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kcp/jsonl.hpp"

namespace kcp {

class Gateway;

enum class DocOrigin { source_corpus, substituted };

// Recorded on documents produced by counterfactual substitution.
struct Substitution {
    std::string a_real;  // primary realistic answer the counterfactual replaced
    std::string a_ctf;
    std::size_t replacements = 0;
};

struct Document {
    std::string doc_id;
    std::string title;
    std::string text;
    DocOrigin origin = DocOrigin::source_corpus;
    std::optional<Substitution> substitution;
};

struct QuestionRecord {
    std::string question_id;
    std::string title;
    std::string question;
    std::vector<std::string> realistic_answers;
    std::optional<std::string> evidence_doc_id;
    // Per-document human annotations: true = this document answers the
    // question, false = related but unanswerable (a hard negative).
    std::map<std::string, bool> answerable;

    bool conflicting_destined() const {
        return evidence_doc_id.has_value() && !realistic_answers.empty();
    }
};

struct RejectRecord {
    std::string kind;  // "question" | "document"
    std::string id;
    std::string reason;
    json payload;
};

enum class CorpusFormat { squad_v2, generic_qa };

CorpusFormat corpus_format_from_string(const std::string& s);
std::string to_string(CorpusFormat f);

class CorpusSnapshot {
  public:
    CorpusSnapshot() = default;
    // Computes snapshot_id from document and question content; rejects and
    // the creation timestamp do not participate in the id.
    static CorpusSnapshot build(std::vector<Document> docs,
                                std::vector<QuestionRecord> questions,
                                std::vector<RejectRecord> rejects,
                                std::string created_at = {});

    const std::string& snapshot_id() const { return snapshot_id_; }
    const std::string& created_at() const { return created_at_; }
    const std::vector<Document>& documents() const { return documents_; }
    const std::vector<QuestionRecord>& questions() const { return questions_; }
    const std::vector<RejectRecord>& rejects() const { return rejects_; }

    const Document* find_document(const std::string& doc_id) const;
    std::size_t doc_index(const std::string& doc_id) const;  // throws ValidationError
    const QuestionRecord* find_question(const std::string& question_id) const;

    std::size_t destined_conflicting() const;
    std::size_t destined_irrelevant() const;

    // Lowercased unigram sets per document, built once; backs the default
    // similarity scorer and is safe to read concurrently.
    const std::vector<std::set<std::string>>& doc_token_sets() const { return token_sets_; }

  private:
    std::string snapshot_id_;
    std::string created_at_;
    std::vector<Document> documents_;
    std::vector<QuestionRecord> questions_;
    std::vector<RejectRecord> rejects_;
    std::map<std::string, std::size_t> doc_by_id_;
    std::map<std::string, std::size_t> question_by_id_;
    std::vector<std::set<std::string>> token_sets_;
};

// Throws IngestError when the file cannot be parsed (message carries the
// byte offset) or when it contains no question entries at all. Questions or
// documents that fail validation are quarantined into rejects, not dropped
// silently.
CorpusSnapshot ingest_corpus(const std::filesystem::path& path, CorpusFormat format);

// Snapshot directory layout: documents.jsonl, questions.jsonl,
// rejects.jsonl, manifest.json (snapshot_id, counts, created_at).
void persist_snapshot(const CorpusSnapshot& snapshot, const std::filesystem::path& dir);
CorpusSnapshot load_snapshot(const std::filesystem::path& dir);

class SimilarityScorer {
  public:
    virtual ~SimilarityScorer() = default;
    virtual double score(const CorpusSnapshot& snap, std::size_t doc_a, std::size_t doc_b) const = 0;
    // Similarity of a document to free text (used when a question has no
    // anchor document).
    virtual double score_query(const CorpusSnapshot& snap, std::size_t doc,
                               const std::string& query_text) const = 0;
    virtual std::string name() const = 0;
};

// Cosine over binary unigram-presence vectors: |A ∩ B| / sqrt(|A|·|B|).
class TermOverlapScorer : public SimilarityScorer {
  public:
    double score(const CorpusSnapshot& snap, std::size_t a, std::size_t b) const override;
    double score_query(const CorpusSnapshot& snap, std::size_t doc,
                       const std::string& query_text) const override;
    std::string name() const override { return "term_overlap"; }
};

// Cosine over backend embeddings fetched through the gateway. All document
// vectors are fetched at construction so scoring itself never does IO.
class EmbeddingScorer : public SimilarityScorer {
  public:
    EmbeddingScorer(const CorpusSnapshot& snap, Gateway& gateway);
    double score(const CorpusSnapshot& snap, std::size_t a, std::size_t b) const override;
    double score_query(const CorpusSnapshot& snap, std::size_t doc,
                       const std::string& query_text) const override;
    std::string name() const override { return "embedding"; }

  private:
    Gateway* gateway_;
    std::vector<std::vector<double>> doc_vectors_;
};

// Ranks every candidate document (excluding `exclude` and the query doc)
// for the given query doc. same_topic=true orders by title equality first,
// then similarity descending; same_topic=false orders different titles
// first, then similarity ascending. Ties always break by ascending doc_id,
// so the order is total. Exposed for callers that walk the ranking with
// extra filters.
std::vector<std::string> rank_neighbors(const CorpusSnapshot& snap, const std::string& doc_id,
                                        bool same_topic, const std::set<std::string>& exclude,
                                        const SimilarityScorer& scorer);

// Top-k slice of rank_neighbors. Throws PreconditionError on k == 0 and
// InsufficientCandidatesError (naming the shortfall) when fewer than k
// candidates remain.
std::vector<std::string> topic_neighbors(const CorpusSnapshot& snap, const std::string& doc_id,
                                         bool same_topic, std::size_t k,
                                         const std::set<std::string>& exclude,
                                         const SimilarityScorer& scorer);

void to_json(json& j, const Document& d);
void from_json(const json& j, Document& d);
void to_json(json& j, const QuestionRecord& q);
void from_json(const json& j, QuestionRecord& q);
void to_json(json& j, const RejectRecord& r);
void from_json(const json& j, RejectRecord& r);

}  // namespace kcp
