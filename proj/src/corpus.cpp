#include "kcp/corpus.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>

#include "kcp/errors.hpp"
#include "kcp/gateway.hpp"
#include "kcp/hash.hpp"
#include "kcp/text.hpp"

namespace kcp {

namespace {

std::string now_utc_iso() {
    std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::set<std::string> unigram_set(const Document& d) {
    std::set<std::string> out;
    for (const std::string& tok : ws_tokens(to_lower(d.title))) out.insert(tok);
    for (const std::string& tok : ws_tokens(to_lower(d.text))) out.insert(tok);
    return out;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) return 0.0;
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0 || nb == 0) return 0.0;
    return dot / std::sqrt(na * nb);
}

// Shared scaffolding for both ingest adapters: collects documents and
// questions, validates them, and quarantines what does not hold up.
struct IngestAccumulator {
    std::vector<Document> docs;
    std::vector<QuestionRecord> questions;
    std::vector<RejectRecord> rejects;
    std::map<std::string, std::size_t> doc_by_id;
    std::set<std::string> question_ids;
    std::size_t parsed_questions = 0;

    void reject(std::string kind, std::string id, std::string reason, json payload = {}) {
        rejects.push_back({std::move(kind), std::move(id), std::move(reason), std::move(payload)});
    }

    // Returns false when an existing doc with the same id has different
    // content, which the caller treats as a validation failure.
    bool add_document(const Document& d) {
        auto it = doc_by_id.find(d.doc_id);
        if (it != doc_by_id.end()) {
            const Document& prev = docs[it->second];
            return prev.title == d.title && prev.text == d.text;
        }
        doc_by_id[d.doc_id] = docs.size();
        docs.push_back(d);
        return true;
    }

    void add_question(QuestionRecord q, const json& payload) {
        ++parsed_questions;
        if (q.question_id.empty()) {
            reject("question", "", "missing question_id", payload);
            return;
        }
        if (!question_ids.insert(q.question_id).second) {
            reject("question", q.question_id, "duplicate question_id", payload);
            return;
        }
        if (trim(q.question).empty()) {
            reject("question", q.question_id, "empty question text", payload);
            return;
        }
        if (q.evidence_doc_id) {
            auto it = doc_by_id.find(*q.evidence_doc_id);
            if (it == doc_by_id.end()) {
                reject("question", q.question_id,
                       "evidence document not found: " + *q.evidence_doc_id, payload);
                return;
            }
            if (q.realistic_answers.empty()) {
                reject("question", q.question_id, "evidence document but no realistic answers",
                       payload);
                return;
            }
            // The evidence document must contain at least one gold answer
            // verbatim, otherwise later substitution cannot work.
            const std::string& text = docs[it->second].text;
            bool contained = false;
            for (const std::string& a : q.realistic_answers) {
                if (!a.empty() && text.find(a) != std::string::npos) {
                    contained = true;
                    break;
                }
            }
            if (!contained) {
                reject("question", q.question_id,
                       "no realistic answer occurs verbatim in evidence document", payload);
                return;
            }
        }
        questions.push_back(std::move(q));
    }
};

void ingest_squad(const std::filesystem::path& path, IngestAccumulator& acc) {
    json root;
    try {
        root = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw IngestError("parse error in " + path.string() + " at byte " +
                          std::to_string(e.byte > 0 ? e.byte - 1 : 0) + ": " + e.what());
    }
    if (!root.is_object() || !root.contains("data") || !root["data"].is_array()) {
        throw IngestError(path.string() + ": not a SQuAD-2.0 file (missing top-level data array)");
    }

    for (const json& article : root["data"]) {
        std::string title = article.value("title", "");
        if (!article.contains("paragraphs") || !article["paragraphs"].is_array()) continue;
        std::size_t para_idx = 0;
        for (const json& para : article["paragraphs"]) {
            std::string context = para.value("context", "");
            std::string doc_id = title + "::" + std::to_string(para_idx);
            ++para_idx;
            bool doc_ok = !trim(context).empty();
            if (doc_ok) {
                Document d{doc_id, title, context, DocOrigin::source_corpus, std::nullopt};
                if (!acc.add_document(d)) {
                    acc.reject("document", doc_id, "doc_id redefined with different content");
                    doc_ok = false;
                }
            } else {
                acc.reject("document", doc_id, "empty paragraph context");
            }
            if (!para.contains("qas") || !para["qas"].is_array()) continue;
            for (const json& qa : para["qas"]) {
                QuestionRecord q;
                q.question_id = qa.value("id", "");
                q.title = title;
                q.question = qa.value("question", "");
                bool impossible = qa.value("is_impossible", false);
                if (!doc_ok) {
                    ++acc.parsed_questions;
                    acc.reject("question", q.question_id, "paragraph document was rejected", qa);
                    continue;
                }
                if (!impossible) {
                    if (qa.contains("answers")) {
                        for (const json& a : qa["answers"]) {
                            std::string text = a.value("text", "");
                            if (text.empty()) continue;
                            if (std::find(q.realistic_answers.begin(), q.realistic_answers.end(),
                                          text) == q.realistic_answers.end()) {
                                q.realistic_answers.push_back(text);
                            }
                        }
                    }
                    q.evidence_doc_id = doc_id;
                    q.answerable[doc_id] = true;
                } else {
                    // The annotators judged this paragraph relevant but
                    // unanswerable for the question: a hard negative.
                    q.answerable[doc_id] = false;
                }
                acc.add_question(std::move(q), qa);
            }
        }
    }
}

// generic_qa: one JSON object per line.
//   {"question_id": "...", "title": "...", "question": "...",
//    "answers": ["..."], "evidence_doc_id": "...",
//    "documents": [{"doc_id": "...", "title": "...", "text": "...",
//                   "answerable": true|false}]}
// answers and evidence_doc_id are optional (absent for questions destined
// for irrelevant contexts); the per-document answerable flag is optional
// and records this question's annotation for that document. Documents may
// repeat across lines as long as their content is identical.
void ingest_generic(const std::filesystem::path& path, IngestAccumulator& acc) {
    for_each_jsonl(path, [&](const json& rec, std::size_t line_no) {
        if (!rec.is_object()) {
            acc.reject("question", "line " + std::to_string(line_no), "record is not an object",
                       rec);
            ++acc.parsed_questions;
            return;
        }
        QuestionRecord q;
        q.question_id = rec.value("question_id", "");
        q.title = rec.value("title", "");
        q.question = rec.value("question", "");
        if (rec.contains("answers")) {
            for (const json& a : rec["answers"]) {
                if (a.is_string() && !a.get<std::string>().empty()) {
                    q.realistic_answers.push_back(a.get<std::string>());
                }
            }
        }
        if (rec.contains("evidence_doc_id") && rec["evidence_doc_id"].is_string()) {
            q.evidence_doc_id = rec["evidence_doc_id"].get<std::string>();
        }
        bool docs_ok = true;
        if (rec.contains("documents")) {
            for (const json& dj : rec["documents"]) {
                Document d;
                d.doc_id = dj.value("doc_id", "");
                d.title = dj.value("title", "");
                d.text = dj.value("text", "");
                if (d.doc_id.empty() || trim(d.text).empty()) {
                    acc.reject("document", d.doc_id, "document missing doc_id or text", dj);
                    docs_ok = false;
                    continue;
                }
                if (!acc.add_document(d)) {
                    acc.reject("document", d.doc_id, "doc_id redefined with different content", dj);
                    docs_ok = false;
                    continue;
                }
                if (dj.contains("answerable") && dj["answerable"].is_boolean()) {
                    q.answerable[d.doc_id] = dj["answerable"].get<bool>();
                }
            }
        }
        if (!docs_ok) {
            ++acc.parsed_questions;
            acc.reject("question", q.question_id, "one of the question's documents was rejected",
                       rec);
            return;
        }
        acc.add_question(std::move(q), rec);
    });
}

}  // namespace

CorpusFormat corpus_format_from_string(const std::string& s) {
    if (s == "squad_v2") return CorpusFormat::squad_v2;
    if (s == "generic_qa") return CorpusFormat::generic_qa;
    throw PreconditionError("unknown corpus format: " + s + " (expected squad_v2 or generic_qa)");
}

std::string to_string(CorpusFormat f) {
    return f == CorpusFormat::squad_v2 ? "squad_v2" : "generic_qa";
}

CorpusSnapshot CorpusSnapshot::build(std::vector<Document> docs,
                                     std::vector<QuestionRecord> questions,
                                     std::vector<RejectRecord> rejects, std::string created_at) {
    CorpusSnapshot s;
    s.documents_ = std::move(docs);
    s.questions_ = std::move(questions);
    s.rejects_ = std::move(rejects);
    s.created_at_ = created_at.empty() ? now_utc_iso() : std::move(created_at);

    ContentHash h;
    for (const Document& d : s.documents_) {
        h.add(d.doc_id).add(d.title).add(d.text);
        h.add(d.origin == DocOrigin::substituted ? "substituted" : "source_corpus");
        if (d.substitution) {
            h.add(d.substitution->a_real).add(d.substitution->a_ctf);
            h.add_u64(d.substitution->replacements);
        }
    }
    for (const QuestionRecord& q : s.questions_) {
        h.add(q.question_id).add(q.title).add(q.question);
        for (const std::string& a : q.realistic_answers) h.add(a);
        h.add(q.evidence_doc_id ? *q.evidence_doc_id : "");
        for (const auto& [doc, ans] : q.answerable) h.add(doc).add_bool(ans);
    }
    s.snapshot_id_ = h.hex();

    for (std::size_t i = 0; i < s.documents_.size(); ++i) {
        s.doc_by_id_[s.documents_[i].doc_id] = i;
    }
    for (std::size_t i = 0; i < s.questions_.size(); ++i) {
        s.question_by_id_[s.questions_[i].question_id] = i;
    }
    s.token_sets_.reserve(s.documents_.size());
    for (const Document& d : s.documents_) s.token_sets_.push_back(unigram_set(d));
    return s;
}

const Document* CorpusSnapshot::find_document(const std::string& doc_id) const {
    auto it = doc_by_id_.find(doc_id);
    return it == doc_by_id_.end() ? nullptr : &documents_[it->second];
}

std::size_t CorpusSnapshot::doc_index(const std::string& doc_id) const {
    auto it = doc_by_id_.find(doc_id);
    if (it == doc_by_id_.end()) throw ValidationError("unknown doc_id: " + doc_id);
    return it->second;
}

const QuestionRecord* CorpusSnapshot::find_question(const std::string& question_id) const {
    auto it = question_by_id_.find(question_id);
    return it == question_by_id_.end() ? nullptr : &questions_[it->second];
}

std::size_t CorpusSnapshot::destined_conflicting() const {
    std::size_t n = 0;
    for (const QuestionRecord& q : questions_) {
        if (q.conflicting_destined()) ++n;
    }
    return n;
}

std::size_t CorpusSnapshot::destined_irrelevant() const {
    return questions_.size() - destined_conflicting();
}

CorpusSnapshot ingest_corpus(const std::filesystem::path& path, CorpusFormat format) {
    IngestAccumulator acc;
    if (format == CorpusFormat::squad_v2) {
        ingest_squad(path, acc);
    } else {
        ingest_generic(path, acc);
    }
    if (acc.parsed_questions == 0) {
        throw IngestError("empty corpus: " + path.string() + " contains no question entries");
    }
    return CorpusSnapshot::build(std::move(acc.docs), std::move(acc.questions),
                                 std::move(acc.rejects));
}

void to_json(json& j, const Document& d) {
    j = json{{"doc_id", d.doc_id},
             {"title", d.title},
             {"text", d.text},
             {"origin", d.origin == DocOrigin::substituted ? "substituted" : "source_corpus"}};
    if (d.substitution) {
        j["substitution"] = json{{"a_real", d.substitution->a_real},
                                 {"a_ctf", d.substitution->a_ctf},
                                 {"replacements", d.substitution->replacements}};
    }
}

void from_json(const json& j, Document& d) {
    d.doc_id = j.at("doc_id").get<std::string>();
    d.title = j.value("title", "");
    d.text = j.at("text").get<std::string>();
    d.origin = j.value("origin", "source_corpus") == "substituted" ? DocOrigin::substituted
                                                                   : DocOrigin::source_corpus;
    if (j.contains("substitution")) {
        Substitution s;
        s.a_real = j["substitution"].value("a_real", "");
        s.a_ctf = j["substitution"].value("a_ctf", "");
        s.replacements = j["substitution"].value("replacements", std::size_t{0});
        d.substitution = std::move(s);
    } else {
        d.substitution.reset();
    }
}

void to_json(json& j, const QuestionRecord& q) {
    j = json{{"question_id", q.question_id},
             {"title", q.title},
             {"question", q.question},
             {"realistic_answers", q.realistic_answers}};
    if (q.evidence_doc_id) j["evidence_doc_id"] = *q.evidence_doc_id;
    if (!q.answerable.empty()) j["answerable"] = q.answerable;
}

void from_json(const json& j, QuestionRecord& q) {
    q.question_id = j.at("question_id").get<std::string>();
    q.title = j.value("title", "");
    q.question = j.at("question").get<std::string>();
    q.realistic_answers = j.value("realistic_answers", std::vector<std::string>{});
    if (j.contains("evidence_doc_id")) {
        q.evidence_doc_id = j["evidence_doc_id"].get<std::string>();
    } else {
        q.evidence_doc_id.reset();
    }
    q.answerable.clear();
    if (j.contains("answerable")) {
        q.answerable = j["answerable"].get<std::map<std::string, bool>>();
    }
}

void to_json(json& j, const RejectRecord& r) {
    j = json{{"kind", r.kind}, {"id", r.id}, {"reason", r.reason}, {"payload", r.payload}};
}

void from_json(const json& j, RejectRecord& r) {
    r.kind = j.value("kind", "");
    r.id = j.value("id", "");
    r.reason = j.value("reason", "");
    r.payload = j.value("payload", json{});
}

void persist_snapshot(const CorpusSnapshot& snapshot, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<json> docs, questions, rejects;
    docs.reserve(snapshot.documents().size());
    for (const Document& d : snapshot.documents()) docs.push_back(d);
    for (const QuestionRecord& q : snapshot.questions()) questions.push_back(q);
    for (const RejectRecord& r : snapshot.rejects()) rejects.push_back(r);
    write_jsonl(dir / "documents.jsonl", docs);
    write_jsonl(dir / "questions.jsonl", questions);
    write_jsonl(dir / "rejects.jsonl", rejects);
    json manifest{{"snapshot_id", snapshot.snapshot_id()},
                  {"created_at", snapshot.created_at()},
                  {"counts",
                   {{"documents", snapshot.documents().size()},
                    {"questions", snapshot.questions().size()},
                    {"rejects", snapshot.rejects().size()},
                    {"destined_conflicting", snapshot.destined_conflicting()},
                    {"destined_irrelevant", snapshot.destined_irrelevant()}}}};
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

CorpusSnapshot load_snapshot(const std::filesystem::path& dir) {
    std::vector<Document> docs;
    std::vector<QuestionRecord> questions;
    std::vector<RejectRecord> rejects;
    for (const json& j : read_jsonl(dir / "documents.jsonl")) docs.push_back(j.get<Document>());
    for (const json& j : read_jsonl(dir / "questions.jsonl")) {
        questions.push_back(j.get<QuestionRecord>());
    }
    for (const json& j : read_jsonl(dir / "rejects.jsonl")) rejects.push_back(j.get<RejectRecord>());

    json manifest = json::parse(read_file(dir / "manifest.json"));
    CorpusSnapshot snap = CorpusSnapshot::build(std::move(docs), std::move(questions),
                                                std::move(rejects),
                                                manifest.value("created_at", ""));
    std::string recorded = manifest.value("snapshot_id", "");
    if (!recorded.empty() && recorded != snap.snapshot_id()) {
        throw ValidationError("snapshot " + dir.string() + " content does not match its manifest (" +
                              snap.snapshot_id() + " vs " + recorded + ")");
    }
    return snap;
}

double TermOverlapScorer::score(const CorpusSnapshot& snap, std::size_t a, std::size_t b) const {
    const auto& sa = snap.doc_token_sets().at(a);
    const auto& sb = snap.doc_token_sets().at(b);
    if (sa.empty() || sb.empty()) return 0.0;
    std::size_t inter = 0;
    const auto& small = sa.size() <= sb.size() ? sa : sb;
    const auto& large = sa.size() <= sb.size() ? sb : sa;
    for (const std::string& tok : small) {
        if (large.count(tok)) ++inter;
    }
    return static_cast<double>(inter) /
           std::sqrt(static_cast<double>(sa.size()) * static_cast<double>(sb.size()));
}

double TermOverlapScorer::score_query(const CorpusSnapshot& snap, std::size_t doc,
                                      const std::string& query_text) const {
    std::set<std::string> qs;
    for (const std::string& tok : ws_tokens(to_lower(query_text))) qs.insert(tok);
    const auto& ds = snap.doc_token_sets().at(doc);
    if (qs.empty() || ds.empty()) return 0.0;
    std::size_t inter = 0;
    for (const std::string& tok : qs) {
        if (ds.count(tok)) ++inter;
    }
    return static_cast<double>(inter) /
           std::sqrt(static_cast<double>(qs.size()) * static_cast<double>(ds.size()));
}

EmbeddingScorer::EmbeddingScorer(const CorpusSnapshot& snap, Gateway& gateway)
    : gateway_(&gateway) {
    doc_vectors_.reserve(snap.documents().size());
    for (const Document& d : snap.documents()) {
        doc_vectors_.push_back(gateway.embed(d.title + "\n" + d.text));
    }
}

double EmbeddingScorer::score(const CorpusSnapshot&, std::size_t a, std::size_t b) const {
    return cosine(doc_vectors_.at(a), doc_vectors_.at(b));
}

double EmbeddingScorer::score_query(const CorpusSnapshot&, std::size_t doc,
                                    const std::string& query_text) const {
    return cosine(doc_vectors_.at(doc), gateway_->embed(query_text));
}

std::vector<std::string> rank_neighbors(const CorpusSnapshot& snap, const std::string& doc_id,
                                        bool same_topic, const std::set<std::string>& exclude,
                                        const SimilarityScorer& scorer) {
    std::size_t query = snap.doc_index(doc_id);
    const std::string& query_title = snap.documents()[query].title;

    struct Entry {
        bool same_title;
        double score;
        const std::string* id;
    };
    std::vector<Entry> entries;
    entries.reserve(snap.documents().size());
    for (std::size_t i = 0; i < snap.documents().size(); ++i) {
        const Document& d = snap.documents()[i];
        if (i == query || exclude.count(d.doc_id)) continue;
        entries.push_back({d.title == query_title, scorer.score(snap, query, i), &d.doc_id});
    }
    std::sort(entries.begin(), entries.end(), [&](const Entry& a, const Entry& b) {
        if (same_topic) {
            if (a.same_title != b.same_title) return a.same_title;
            if (a.score != b.score) return a.score > b.score;
        } else {
            if (a.same_title != b.same_title) return b.same_title;
            if (a.score != b.score) return a.score < b.score;
        }
        return *a.id < *b.id;
    });
    std::vector<std::string> out;
    out.reserve(entries.size());
    for (const Entry& e : entries) out.push_back(*e.id);
    return out;
}

std::vector<std::string> topic_neighbors(const CorpusSnapshot& snap, const std::string& doc_id,
                                         bool same_topic, std::size_t k,
                                         const std::set<std::string>& exclude,
                                         const SimilarityScorer& scorer) {
    if (k == 0) throw PreconditionError("topic_neighbors: k must be >= 1");
    std::vector<std::string> ranked = rank_neighbors(snap, doc_id, same_topic, exclude, scorer);
    if (ranked.size() < k) {
        throw InsufficientCandidatesError(
            "topic_neighbors: need " + std::to_string(k) + " candidates for " + doc_id +
            ", only " + std::to_string(ranked.size()) + " available (short by " +
            std::to_string(k - ranked.size()) + ")");
    }
    ranked.resize(k);
    return ranked;
}

}  // namespace kcp
