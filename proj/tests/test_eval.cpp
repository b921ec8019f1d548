#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "doctest.h"
#include "kcp/errors.hpp"
#include "kcp/eval.hpp"
#include "kcp/pairs.hpp"
#include "testutil.hpp"

using namespace kcp;

namespace {

ModelOutput output(const std::string& qid, const std::string& ctx, const std::string& text) {
    return {qid, ctx, text};
}

GoldSet gold(const char* a_cf, const char* alpha) {
    GoldSet g;
    if (a_cf) g.a_cf = a_cf;
    if (alpha) g.alpha = alpha;
    return g;
}

std::vector<Judgment> judgments_with(std::size_t n_adherent, std::size_t n_cf,
                                     std::size_t n_robust, std::size_t n_ir) {
    std::vector<Judgment> out;
    for (std::size_t i = 0; i < n_cf; ++i) {
        Judgment j;
        j.question_id = "c" + std::to_string(i);
        j.context_ref = j.question_id + "/cf";
        j.context_kind = ContextKind::conflicting;
        j.verdict = i < n_adherent ? Verdict::adherent : Verdict::robust;
        out.push_back(j);
    }
    for (std::size_t i = 0; i < n_ir; ++i) {
        Judgment j;
        j.question_id = "i" + std::to_string(i);
        j.context_ref = j.question_id + "/ir";
        j.context_kind = ContextKind::irrelevant;
        j.verdict = i < n_robust ? Verdict::robust : Verdict::wrong;
        out.push_back(j);
    }
    return out;
}

}  // namespace

TEST_CASE("judge prefers the conflict answer on conflicting contexts") {
    auto g = gold("Kamala Harris", "Joe Biden");
    auto j = judge(output("q1", "q1/cf",
                          "Based on supplemental knowledge and my own understanding, the answer "
                          "to this question is that Kamala Harris won."),
                   ContextKind::conflicting, g);
    CHECK(j.verdict == Verdict::adherent);
    CHECK(j.matched_target == "conflict");

    // Both answers present: the conflict answer wins the tie.
    auto both = judge(output("q1", "q1/cf", "Joe Biden or Kamala Harris, sources disagree."),
                      ContextKind::conflicting, g);
    CHECK(both.verdict == Verdict::adherent);

    auto rob = judge(output("q1", "q1/cf", "I still believe Joe Biden won."),
                     ContextKind::conflicting, g);
    CHECK(rob.verdict == Verdict::robust);
    CHECK(rob.matched_target == "alpha");

    auto wrong = judge(output("q1", "q1/cf", "Nobody won."), ContextKind::conflicting, g);
    CHECK(wrong.verdict == Verdict::wrong);
    CHECK(wrong.matched_target.empty());
}

TEST_CASE("judge on irrelevant contexts checks alpha only") {
    auto g = gold(nullptr, "Joe Biden");
    CHECK(judge(output("q1", "q1/ir", "It must be Joe Biden."), ContextKind::irrelevant, g).verdict ==
          Verdict::robust);
    CHECK(judge(output("q1", "q1/ir", "Kamala Harris."), ContextKind::irrelevant, g).verdict ==
          Verdict::wrong);
}

TEST_CASE("judge matching is normalized and word-bounded") {
    auto g = gold("Lyon", nullptr);
    CHECK(judge(output("q", "q/cf", "The answer is LYON."), ContextKind::conflicting, g).verdict ==
          Verdict::adherent);
    CHECK(judge(output("q", "q/cf", "Lyonnaise cuisine is famous."), ContextKind::conflicting, g)
              .verdict == Verdict::wrong);
}

TEST_CASE("judge requires the gold answers for the context kind") {
    CHECK_THROWS_AS(judge(output("q", "q/cf", "text"), ContextKind::conflicting,
                          gold(nullptr, "alpha")),
                    PreconditionError);
    CHECK_THROWS_AS(judge(output("q", "q/ir", "text"), ContextKind::irrelevant,
                          gold("cf", nullptr)),
                    PreconditionError);
}

TEST_CASE("aggregate computes exact headline rates") {
    auto js = judgments_with(7, 10, 3, 10);
    auto report = aggregate(js, 0, 17);
    REQUIRE(report.r_ad.has_value());
    REQUIRE(report.r_ro.has_value());
    CHECK(*report.r_ad == doctest::Approx(0.7));
    CHECK(*report.r_ro == doctest::Approx(0.3));
    CHECK(report.n_conflicting == 10);
    CHECK(report.n_irrelevant == 10);
    CHECK(report.n_total == 20);
    CHECK_FALSE(report.r_ad_std.has_value());
    CHECK_FALSE(report.r_ro_std.has_value());
}

TEST_CASE("aggregate bootstrap is deterministic under the seed") {
    auto js = judgments_with(7, 10, 3, 10);
    auto a = aggregate(js, 1000, 17);
    auto b = aggregate(js, 1000, 17);
    REQUIRE(a.r_ad_std.has_value());
    REQUIRE(a.r_ro_std.has_value());
    CHECK(*a.r_ad_std == *b.r_ad_std);
    CHECK(*a.r_ro_std == *b.r_ro_std);
    CHECK(*a.r_ad_std > 0.0);

    auto c = aggregate(js, 1000, 18);
    CHECK(*c.r_ad_std != *a.r_ad_std);
}

TEST_CASE("aggregate of a unanimous sample has zero spread") {
    auto js = judgments_with(10, 10, 0, 0);
    auto report = aggregate(js, 500, 17);
    REQUIRE(report.r_ad.has_value());
    CHECK(*report.r_ad == doctest::Approx(1.0));
    REQUIRE(report.r_ad_std.has_value());
    CHECK(*report.r_ad_std == doctest::Approx(0.0));
    CHECK_FALSE(report.r_ro.has_value());
    CHECK(report.n_irrelevant == 0);
}

TEST_CASE("aggregate refuses an empty judgment list") {
    CHECK_THROWS_AS(aggregate({}, 100, 17), PreconditionError);
}

TEST_CASE("mean_and_std") {
    auto [m, s] = mean_and_std({1.0, 2.0, 3.0});
    CHECK(m == doctest::Approx(2.0));
    CHECK(s == doctest::Approx(std::sqrt(2.0 / 3.0)));
    CHECK_THROWS_AS(mean_and_std({}), PreconditionError);
}

TEST_CASE("prior analysis buckets adherence by prior") {
    std::vector<Judgment> js;
    std::map<std::string, double> priors;
    for (int i = 0; i < 10; ++i) {
        Judgment j;
        j.question_id = "low" + std::to_string(i);
        j.context_ref = j.question_id + "/cf";
        j.context_kind = ContextKind::conflicting;
        j.verdict = i < 9 ? Verdict::adherent : Verdict::robust;
        js.push_back(j);
        priors[j.question_id] = -9.0;
    }
    for (int i = 0; i < 10; ++i) {
        Judgment j;
        j.question_id = "high" + std::to_string(i);
        j.context_ref = j.question_id + "/cf";
        j.context_kind = ContextKind::conflicting;
        j.verdict = i < 4 ? Verdict::adherent : Verdict::wrong;
        js.push_back(j);
        priors[j.question_id] = -2.0;
    }

    auto bins = prior_analysis(js, priors, 2);
    REQUIRE(bins.size() == 2);
    CHECK(bins[0].low == doctest::Approx(-9.0));
    CHECK(bins[0].high == doctest::Approx(-5.5));
    CHECK(bins[1].high == doctest::Approx(-2.0));
    CHECK(bins[0].count == 10);
    CHECK(bins[1].count == 10);
    CHECK(bins[0].adherent == 9);
    CHECK(bins[1].adherent == 4);
    CHECK(bins[0].rate == doctest::Approx(0.9));
    CHECK(bins[1].rate == doctest::Approx(0.4));
    CHECK(bins[0].count + bins[1].count == 20);

    auto one = prior_analysis(js, priors, 1);
    REQUIRE(one.size() == 1);
    CHECK(one[0].count == 20);
    CHECK(one[0].rate == doctest::Approx(13.0 / 20.0));
}

TEST_CASE("prior analysis handles degenerate ranges and missing priors") {
    std::vector<Judgment> js;
    std::map<std::string, double> priors;
    for (int i = 0; i < 4; ++i) {
        Judgment j;
        j.question_id = "q" + std::to_string(i);
        j.context_ref = j.question_id + "/cf";
        j.context_kind = ContextKind::conflicting;
        j.verdict = Verdict::adherent;
        js.push_back(j);
        priors[j.question_id] = -1.5;
    }
    auto bins = prior_analysis(js, priors, 3);
    REQUIRE(bins.size() == 3);
    CHECK(bins[0].count == 4);
    CHECK(bins[1].count == 0);
    CHECK(bins[2].count == 0);
    CHECK(bins[0].rate == doctest::Approx(1.0));

    CHECK_THROWS_WITH_AS(prior_analysis(js, {}, 2), doctest::Contains("score_prior=true"),
                         CapabilityError);
    CHECK_THROWS_AS(prior_analysis(js, priors, 0), PreconditionError);

    // Irrelevant judgments and questions without priors are ignored.
    Judgment ir;
    ir.question_id = "other";
    ir.context_ref = "other/ir";
    ir.context_kind = ContextKind::irrelevant;
    ir.verdict = Verdict::robust;
    js.push_back(ir);
    Judgment no_prior;
    no_prior.question_id = "nope";
    no_prior.context_ref = "nope/cf";
    no_prior.context_kind = ContextKind::conflicting;
    no_prior.verdict = Verdict::adherent;
    js.push_back(no_prior);
    auto again = prior_analysis(js, priors, 3);
    CHECK(again[0].count == 4);
}

TEST_CASE("leakage check measures conflict recall from the bare probe") {
    std::vector<QuestionRecord> storage;
    std::vector<const QuestionRecord*> questions;
    std::map<std::string, ConflictAnswer> conflicts;
    for (int i = 0; i < 3; ++i) {
        QuestionRecord q;
        q.question_id = "q" + std::to_string(i);
        q.title = "T" + std::to_string(i);
        q.question = "Question number " + std::to_string(i) + "?";
        storage.push_back(q);
    }
    for (const auto& q : storage) questions.push_back(&q);
    for (int i = 0; i < 3; ++i) {
        ConflictAnswer c;
        c.question_id = "q" + std::to_string(i);
        c.text = "Conflict" + std::to_string(i) + " Entity";
        c.kind = ConflictKind::counterfactual;
        conflicts[c.question_id] = c;
    }

    SUBCASE("no leakage when responses never mention the conflicts") {
        std::vector<MockRule> rules = {{{"Question number"}, "Innocent reply", std::nullopt, 0, 0}};
        Gateway gw(std::make_shared<MockBackend>(rules), {});
        auto res = leakage_check(gw, questions, conflicts);
        CHECK(res.n_completed == 3);
        CHECK(res.n_matched == 0);
        CHECK(res.n_failed == 0);
        CHECK(res.rate == doctest::Approx(0.0));
    }

    SUBCASE("full leakage when every response echoes the conflict") {
        std::vector<MockRule> rules;
        for (int i = 0; i < 3; ++i) {
            rules.push_back({{"Question number " + std::to_string(i) + "?"},
                             "It is Conflict" + std::to_string(i) + " Entity of course",
                             std::nullopt,
                             0,
                             0});
        }
        Gateway gw(std::make_shared<MockBackend>(rules), {});
        auto res = leakage_check(gw, questions, conflicts);
        CHECK(res.n_completed == 3);
        CHECK(res.n_matched == 3);
        CHECK(res.rate == doctest::Approx(1.0));
    }

    SUBCASE("failures are counted, not fatal") {
        std::vector<MockRule> rules = {
            {{"Question number 0?"}, "Innocent", std::nullopt, 0, 0},
            {{"Question number 1?"}, "Conflict1 Entity", std::nullopt, 0, 0},
        };
        Gateway gw(std::make_shared<MockBackend>(rules), {});
        auto res = leakage_check(gw, questions, conflicts);
        CHECK(res.n_completed == 2);
        CHECK(res.n_matched == 1);
        CHECK(res.n_failed == 1);
        CHECK(res.rate == doctest::Approx(0.5));
    }

    SUBCASE("questions without conflicts are excluded") {
        conflicts.erase("q2");
        std::vector<MockRule> rules = {{{"Question number"}, "Innocent", std::nullopt, 0, 0}};
        Gateway gw(std::make_shared<MockBackend>(rules), {});
        auto res = leakage_check(gw, questions, conflicts);
        CHECK(res.n_completed == 2);
    }

    SUBCASE("no overlapping questions at all is an error") {
        std::vector<MockRule> rules = {{{"Question number"}, "Innocent", std::nullopt, 0, 0}};
        Gateway gw(std::make_shared<MockBackend>(rules), {});
        CHECK_THROWS_AS(leakage_check(gw, questions, {}), PreconditionError);
    }
}

TEST_CASE("verdicts round-trip through strings") {
    for (Verdict v : {Verdict::adherent, Verdict::robust, Verdict::wrong}) {
        CHECK(verdict_from_string(to_string(v)) == v);
    }
    CHECK_THROWS_AS(verdict_from_string("meh"), ValidationError);
}
