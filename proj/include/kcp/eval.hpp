#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kcp/conflict.hpp"
#include "kcp/context.hpp"
#include "kcp/gateway.hpp"
#include "kcp/probe.hpp"

namespace kcp {

struct ModelOutput {
    std::string question_id;
    std::string context_ref;
    std::string response_text;
};

enum class Verdict { adherent, robust, wrong };

std::string to_string(Verdict v);
Verdict verdict_from_string(const std::string& s);

struct GoldSet {
    std::optional<std::string> a_cf;   // conflict answer, conflicting contexts
    std::optional<std::string> alpha;  // parametric answer; absent when abstained
};

struct Judgment {
    std::string question_id;
    std::string context_ref;
    ContextKind context_kind;
    Verdict verdict;
    std::string matched_target;  // "conflict", "alpha", or ""
};

// Containment-based grading. On conflicting contexts the conflict answer
// is checked first, so a response naming both counts as adherent. Missing
// gold for the kind under judgment throws PreconditionError.
Judgment judge(const ModelOutput& output, ContextKind kind, const GoldSet& gold);

struct MetricsReport {
    std::optional<double> r_ad;      // adherent fraction over conflicting contexts
    std::optional<double> r_ad_std;  // bootstrap std; absent when repeats == 0
    std::size_t n_conflicting = 0;
    std::optional<double> r_ro;  // robust fraction over irrelevant contexts
    std::optional<double> r_ro_std;
    std::size_t n_irrelevant = 0;
    std::size_t n_total = 0;
};

// Aggregates judgments into the two headline rates with a seeded bootstrap
// standard deviation. Throws PreconditionError on an empty judgment list;
// a rate is absent when its context kind has no judgments.
MetricsReport aggregate(const std::vector<Judgment>& judgments, std::size_t bootstrap_repeats,
                        std::uint64_t seed);

// Mean and population standard deviation of a sample; used for
// repeated-generation evaluation.
std::pair<double, double> mean_and_std(const std::vector<double>& xs);

struct PriorBin {
    double low = 0.0;
    double high = 0.0;
    std::size_t count = 0;
    std::size_t adherent = 0;
    double rate = 0.0;
};

// Buckets conflicting-context judgments by the question's prior
// log-probability into equal-width bins over the observed range and
// reports the adherence rate per bin. Throws CapabilityError when no
// judgment has a recorded prior.
std::vector<PriorBin> prior_analysis(const std::vector<Judgment>& judgments,
                                     const std::map<std::string, double>& priors_by_qid,
                                     std::size_t bins);

struct LeakageResult {
    double rate = 0.0;  // fraction of completed re-probes naming the conflict answer
    std::size_t n_completed = 0;
    std::size_t n_matched = 0;
    std::size_t n_failed = 0;
};

// Re-asks each question without any context and checks whether the
// conflict answer shows up in the closed-book response. A nonzero rate
// means conflict answers leak out of the dataset into parametric recall.
LeakageResult leakage_check(Gateway& gateway, const std::vector<const QuestionRecord*>& questions,
                            const std::map<std::string, ConflictAnswer>& conflicts_by_qid,
                            std::size_t max_new_tokens = 256);

void to_json(json& j, const Judgment& g);
void from_json(const json& j, Judgment& g);
void to_json(json& j, const MetricsReport& r);
void to_json(json& j, const PriorBin& b);
void to_json(json& j, const LeakageResult& r);

}  // namespace kcp
