#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "doctest.h"
#include "kcp/conflict.hpp"
#include "kcp/errors.hpp"
#include "kcp/gateway.hpp"
#include "kcp/probe.hpp"
#include "kcp/prompts.hpp"
#include "kcp/text.hpp"
#include "testutil.hpp"

using namespace kcp;

namespace {

QuestionRecord make_question(const std::string& qid, const std::string& title,
                             const std::string& q, std::vector<std::string> answers = {}) {
    QuestionRecord rec;
    rec.question_id = qid;
    rec.title = title;
    rec.question = q;
    rec.realistic_answers = std::move(answers);
    return rec;
}

Gateway mock_gateway(std::vector<MockRule> rules, MockConfig cfg = {},
                     std::vector<MockScoreRule> score = {}) {
    return Gateway(std::make_shared<MockBackend>(std::move(rules), cfg, std::move(score)), {});
}

}  // namespace

TEST_CASE("probe keeps a direct answer verbatim") {
    auto gw = mock_gateway({{{"capital of France"}, "  Paris  ", std::nullopt, 0, 0}},
                           MockConfig{10, 0, 0});
    auto q = make_question("q1", "France", "What is the capital of France?");
    auto ans = probe_question(q, gw);
    CHECK(ans.alpha_text == "Paris");
    CHECK_FALSE(ans.abstained);
    CHECK(ans.question_id == "q1");
    CHECK(ans.raw_response == "  Paris  ");
    REQUIRE(ans.prior_logprob.has_value());
    CHECK(*ans.prior_logprob == doctest::Approx(std::log(0.1)));
}

TEST_CASE("probe treats refusal phrases as abstention") {
    auto gw = mock_gateway({{{"mystery"}, "I don't know.", std::nullopt, 0, 0}},
                           MockConfig{10, 0, 0});
    auto q = make_question("q2", "Mystery", "What is the mystery value?");
    auto ans = probe_question(q, gw);
    CHECK(ans.abstained);
    CHECK(ans.alpha_text.empty());
    CHECK_FALSE(ans.prior_logprob.has_value());
}

TEST_CASE("probe treats punctuation-only answers as abstention") {
    auto gw = mock_gateway({{{"noise"}, "...", std::nullopt, 0, 0}});
    auto q = make_question("q3", "Noise", "What about noise?");
    auto ans = probe_question(q, gw);
    CHECK(ans.abstained);
}

TEST_CASE("probe prior can condition on the bare question") {
    std::vector<MockScoreRule> score = {{{"This is a question about"}, {-3.0}}};
    auto gw = mock_gateway({{{"capital"}, "Paris", std::nullopt, 0, 0}}, MockConfig{10, 0, 0},
                           score);
    auto q = make_question("q4", "France", "What is the capital of France?");

    auto with_prompt = probe_question(q, gw);
    REQUIRE(with_prompt.prior_logprob.has_value());
    CHECK(*with_prompt.prior_logprob == doctest::Approx(-3.0));

    ProbeOptions opts;
    opts.prior_on_bare_question = true;
    auto bare = probe_question(q, gw, opts);
    REQUIRE(bare.prior_logprob.has_value());
    CHECK(*bare.prior_logprob == doctest::Approx(std::log(0.1)));
}

TEST_CASE("probe can skip scoring") {
    auto gw = mock_gateway({{{"capital"}, "Paris", std::nullopt, 0, 0}}, MockConfig{10, 0, 0});
    auto q = make_question("q5", "France", "What is the capital of France?");
    ProbeOptions opts;
    opts.score_prior = false;
    CHECK_FALSE(probe_question(q, gw, opts).prior_logprob.has_value());
}

TEST_CASE("probe prompt carries title, question, and refusal instruction") {
    std::string p = prompts::parameter_answer("France", "What is the capital of France?");
    CHECK(p.find("This is a question about France.") != std::string::npos);
    CHECK(p.find("What is the capital of France?") != std::string::npos);
    CHECK(p.find("I don't know") != std::string::npos);
}

TEST_CASE("refusal detection is phrase-based and case-insensitive") {
    CHECK(prompts::is_refusal("I DON'T KNOW"));
    CHECK(prompts::is_refusal("Well, I'm not sure about that."));
    CHECK(prompts::is_refusal("I cannot answer this."));
    CHECK_FALSE(prompts::is_refusal("Paris"));
}

TEST_CASE("forge prefers a realistic answer that already disagrees") {
    auto gw = mock_gateway({});  // any generate call would throw
    auto q = make_question("q1", "Election", "Who won?", {"Kamala Harris"});
    ParameterAnswer alpha;
    alpha.question_id = "q1";
    alpha.alpha_text = "Joe Biden";
    auto c = forge_conflict(q, alpha, gw);
    CHECK(c.kind == ConflictKind::realistic);
    CHECK(c.text == "Kamala Harris");
    CHECK(c.alpha_ref == "Joe Biden");
    CHECK(c.source_real == "Kamala Harris");
    CHECK_FALSE(c.audit.has_value());
}

TEST_CASE("forge uses the realistic answer when the probe abstained") {
    auto gw = mock_gateway({});
    auto q = make_question("q2", "Shrine", "Who tends it?", {"Rei Ayanami"});
    ParameterAnswer alpha;
    alpha.question_id = "q2";
    alpha.abstained = true;
    auto c = forge_conflict(q, alpha, gw);
    CHECK(c.kind == ConflictKind::realistic);
    CHECK(c.text == "Rei Ayanami");
    CHECK(c.alpha_ref.empty());
}

TEST_CASE("forge skips realistic answers that agree and picks the first that differs") {
    auto gw = mock_gateway({});
    auto q = make_question("q3", "City", "Which city?", {"The Paris.", "Lyon"});
    ParameterAnswer alpha;
    alpha.alpha_text = "paris";
    auto c = forge_conflict(q, alpha, gw);
    CHECK(c.kind == ConflictKind::realistic);
    CHECK(c.text == "Lyon");
}

TEST_CASE("forge falls back to a counterfactual when all realistic answers agree") {
    auto gw = mock_gateway(
        {{{"speciously plausible", "capital of France"}, "Fake answer: Lyon", std::nullopt, 0, 0}});
    auto q = make_question("q4", "France", "What is the capital of France?", {"Paris"});
    ParameterAnswer alpha;
    alpha.alpha_text = "Paris";
    auto c = forge_conflict(q, alpha, gw);
    CHECK(c.kind == ConflictKind::counterfactual);
    CHECK(c.text == "Lyon");
    CHECK(c.source_real == "Paris");
    REQUIRE(c.audit.has_value());
    CHECK(c.audit->rejected_candidates.empty());
    CHECK(c.audit->prompt.find("speciously plausible") != std::string::npos);
    CHECK(normalize_answer(c.text) != normalize_answer(alpha.alpha_text));
}

TEST_CASE("generate_counterfactual returns the raw completion") {
    auto gw = mock_gateway({{{"highest mountain"},
                             "  Fake answer: \"Lhotse\"\nQuestion: ignored",
                             std::nullopt, 0, 0}});
    auto q = make_question("q5", "Mountains", "What is the highest mountain in the world?");
    CHECK(generate_counterfactual(q, "Mount Everest", gw, 0.0, 64) ==
          "  Fake answer: \"Lhotse\"\nQuestion: ignored");
}

TEST_CASE("forge cleans echoed prefixes, quotes, and extra lines from candidates") {
    auto gw = mock_gateway({{{"highest mountain"},
                             "  Fake answer: \"Lhotse\"\nQuestion: ignored",
                             std::nullopt, 0, 0}});
    auto q = make_question("q5b", "Mountains", "What is the highest mountain in the world?",
                           {"Mount Everest"});
    ParameterAnswer alpha;
    alpha.alpha_text = "Mount Everest";
    auto c = forge_conflict(q, alpha, gw);
    CHECK(c.kind == ConflictKind::counterfactual);
    CHECK(c.text == "Lhotse");
    REQUIRE(c.audit.has_value());
    CHECK(c.audit->raw_response == "  Fake answer: \"Lhotse\"\nQuestion: ignored");
}

TEST_CASE("counterfactual candidates equal to alpha are rejected and retried") {
    auto gw = mock_gateway({{{"speciously plausible"}, "Paris", std::nullopt, 1, 0},
                            {{"speciously plausible"}, "Fake answer: Lyon", std::nullopt, 0, 0}});
    auto q = make_question("q6", "France", "Capital?", {"Paris"});
    ParameterAnswer alpha;
    alpha.alpha_text = "Paris";
    auto c = forge_conflict(q, alpha, gw);
    CHECK(c.text == "Lyon");
    REQUIRE(c.audit.has_value());
    REQUIRE(c.audit->rejected_candidates.size() == 1);
    CHECK(c.audit->rejected_candidates[0] == "Paris");
}

TEST_CASE("counterfactual candidates equal to another realistic answer are rejected") {
    auto gw = mock_gateway({{{"speciously plausible"}, "the Nile!", std::nullopt, 1, 0},
                            {{"speciously plausible"}, "Danube", std::nullopt, 0, 0}});
    auto q = make_question("q7", "Rivers", "Longest river?", {"Amazon", "Nile"});
    ParameterAnswer agree;
    agree.alpha_text = "The Amazon.";
    // The first candidate differs from alpha but collides with answers[1].
    auto c = forge_counterfactual(q, agree, gw);
    CHECK(c.kind == ConflictKind::counterfactual);
    CHECK(c.text == "Danube");
    CHECK(c.source_real == "Amazon");
    REQUIRE(c.audit.has_value());
    REQUIRE(c.audit->rejected_candidates.size() == 1);
    CHECK(c.audit->rejected_candidates[0] == "the Nile!");
}

TEST_CASE("counterfactual exhaustion raises a rejection error naming candidates") {
    auto gw = mock_gateway({{{"speciously plausible"}, "Paris", std::nullopt, 0, 0}});
    auto q = make_question("q8", "France", "Capital?", {"Paris"});
    ParameterAnswer alpha;
    alpha.alpha_text = "Paris";
    ForgeOptions opts;
    opts.candidate_retries = 3;
    CHECK_THROWS_WITH_AS(forge_conflict(q, alpha, gw, opts), doctest::Contains("Paris"),
                         GenerationRejectedError);
}

TEST_CASE("forge requires at least one usable realistic answer") {
    auto gw = mock_gateway({});
    auto q = make_question("q9", "T", "Question?", {});
    ParameterAnswer alpha;
    alpha.alpha_text = "whatever";
    CHECK_THROWS_AS(forge_conflict(q, alpha, gw), PreconditionError);

    auto q2 = make_question("q10", "T", "Question?", {"..."});
    CHECK_THROWS_AS(forge_conflict(q2, alpha, gw), GenerationRejectedError);
}

TEST_CASE("counterfactual prompt embeds question and realistic answer") {
    std::string p = prompts::counterfactual("Who painted it?", "Edgar Degas");
    CHECK(p.find("speciously plausible") != std::string::npos);
    CHECK(p.find("Who painted it?") != std::string::npos);
    CHECK(p.find("Edgar Degas") != std::string::npos);
    CHECK(p.find("Fake answer:") != std::string::npos);
}
