#include <memory>
#include <string>
#include <vector>

#include "doctest.h"
#include "kcp/context.hpp"
#include "kcp/errors.hpp"
#include "kcp/negatives.hpp"
#include "kcp/prompts.hpp"
#include "testutil.hpp"

using namespace kcp;

namespace {

QuestionRecord make_question(const std::string& qid = "q1") {
    QuestionRecord q;
    q.question_id = qid;
    q.title = "Senate";
    q.question = "Who won the Arizona senate race?";
    return q;
}

ContextPackage make_context(ContextKind kind) {
    ContextPackage ctx;
    ctx.context_id = kind == ContextKind::conflicting ? "q1/cf" : "q1/ir";
    ctx.question_id = "q1";
    ctx.kind = kind;
    ctx.docs = {
        {"d1", "Senate", "Official tallies credited Mark Kelly with the Arizona seat.",
         DocOrigin::source_corpus, std::nullopt},
        {"d2", "Weather", "A dry week is forecast for the high desert plateaus.",
         DocOrigin::source_corpus, std::nullopt},
    };
    return ctx;
}

Gateway mock_gateway(std::vector<MockRule> rules) {
    return Gateway(std::make_shared<MockBackend>(std::move(rules)), {});
}

}  // namespace

TEST_CASE("overinclusion returns a context word that differs from the potential answer") {
    auto gw = mock_gateway({{{"Please select a word"}, "Mark Kelly", std::nullopt, 0, 0}});
    auto q = make_question();
    auto ctx = make_context(ContextKind::conflicting);
    auto neg = sample_overinclusion(q, ctx, "Kamala Harris", gw);
    CHECK(neg.question_id == "q1");
    CHECK(neg.context_ref == "q1/cf");
    CHECK(neg.error_type == NegErrorType::overinclusion);
    CHECK(neg.answer_text == "Mark Kelly");
    REQUIRE(neg.audit.has_value());
    CHECK(neg.audit->rejected_candidates.empty());
    CHECK(neg.audit->prompt.find("Kamala Harris") != std::string::npos);
}

TEST_CASE("overinclusion cleans answer prefixes and quotes") {
    auto gw = mock_gateway(
        {{{"Please select a word"}, "Alternative answer: \"Mark Kelly\"", std::nullopt, 0, 0}});
    auto neg = sample_overinclusion(make_question(), make_context(ContextKind::conflicting),
                                    "Kamala Harris", gw);
    CHECK(neg.answer_text == "Mark Kelly");
}

TEST_CASE("overinclusion strips terminal punctuation when needed for containment") {
    auto gw = mock_gateway({{{"Please select a word"}, "Mark Kelly.", std::nullopt, 0, 0}});
    auto neg = sample_overinclusion(make_question(), make_context(ContextKind::conflicting),
                                    "Kamala Harris", gw);
    CHECK(neg.answer_text == "Mark Kelly");
}

TEST_CASE("overinclusion rejects candidates missing from the context and retries") {
    auto gw = mock_gateway({{{"Please select a word"}, "Ruth Gardner", std::nullopt, 1, 0},
                            {{"Please select a word"}, "Mark Kelly", std::nullopt, 0, 0}});
    auto neg = sample_overinclusion(make_question(), make_context(ContextKind::conflicting),
                                    "Kamala Harris", gw);
    CHECK(neg.answer_text == "Mark Kelly");
    REQUIRE(neg.audit.has_value());
    REQUIRE(neg.audit->rejected_candidates.size() == 1);
    CHECK(neg.audit->rejected_candidates[0] == "Ruth Gardner");
}

TEST_CASE("overinclusion rejects candidates equal to the potential answer") {
    auto gw = mock_gateway({{{"Please select a word"}, "Kamala Harris!", std::nullopt, 1, 0},
                            {{"Please select a word"}, "Mark Kelly", std::nullopt, 0, 0}});
    auto ctx = make_context(ContextKind::conflicting);
    ctx.docs[1].text += " Kamala Harris! was mentioned in passing.";
    auto neg = sample_overinclusion(make_question(), ctx, "Kamala Harris", gw);
    CHECK(neg.answer_text == "Mark Kelly");
}

TEST_CASE("overinclusion exhaustion raises a rejection error") {
    auto gw = mock_gateway({{{"Please select a word"}, "Ghost Entry", std::nullopt, 0, 0}});
    NegativeOptions opts;
    opts.candidate_retries = 3;
    CHECK_THROWS_AS(sample_overinclusion(make_question(), make_context(ContextKind::conflicting),
                                         "Kamala Harris", gw, opts),
                    GenerationRejectedError);
}

TEST_CASE("overinclusion requires a potential answer") {
    auto gw = mock_gateway({});
    CHECK_THROWS_AS(
        sample_overinclusion(make_question(), make_context(ContextKind::conflicting), "", gw),
        PreconditionError);
}

TEST_CASE("overinclusion works against irrelevant contexts too") {
    auto gw = mock_gateway({{{"Please select a word"}, "Mark Kelly", std::nullopt, 0, 0}});
    auto neg = sample_overinclusion(make_question(), make_context(ContextKind::irrelevant),
                                    "Some Alpha", gw);
    CHECK(neg.context_ref == "q1/ir");
    CHECK(neg.answer_text == "Mark Kelly");
}

TEST_CASE("ignorance echoes alpha against a conflicting context") {
    ParameterAnswer alpha;
    alpha.question_id = "q1";
    alpha.alpha_text = "Blake Masters";
    auto neg = sample_ignorance(make_question(), make_context(ContextKind::conflicting), alpha);
    REQUIRE(neg.has_value());
    CHECK(neg->error_type == NegErrorType::ignorance);
    CHECK(neg->answer_text == "Blake Masters");
    CHECK(neg->context_ref == "q1/cf");
    CHECK_FALSE(neg->audit.has_value());
}

TEST_CASE("ignorance is skipped when the probe abstained") {
    ParameterAnswer alpha;
    alpha.question_id = "q1";
    alpha.abstained = true;
    CHECK_FALSE(
        sample_ignorance(make_question(), make_context(ContextKind::conflicting), alpha).has_value());
}

TEST_CASE("ignorance refuses irrelevant contexts") {
    ParameterAnswer alpha;
    alpha.alpha_text = "Blake Masters";
    CHECK_THROWS_AS(sample_ignorance(make_question(), make_context(ContextKind::irrelevant), alpha),
                    PreconditionError);
}

TEST_CASE("overinclusion prompt includes question, potential answer, and context") {
    std::string p = prompts::contextual_overinclusion("Who?", "The Potential", "ctx body here");
    CHECK(p.find("Please select a word") != std::string::npos);
    CHECK(p.find("Who?") != std::string::npos);
    CHECK(p.find("The Potential") != std::string::npos);
    CHECK(p.find("ctx body here") != std::string::npos);
}
