#include <string>
#include <vector>

#include "doctest.h"
#include "kcp/text.hpp"

using namespace kcp;

TEST_CASE("normalize_answer collapses case, articles, punctuation, whitespace") {
    CHECK(normalize_answer("The  Eiffel Tower.") == "eiffel tower");
    CHECK(normalize_answer("Kamala Harris") == "kamala harris");
    CHECK(normalize_answer("an Apple!") == "apple");
    CHECK(normalize_answer("  A   the an   ") == "");
    CHECK(normalize_answer("") == "");
    CHECK(normalize_answer("!!!") == "");
    CHECK(normalize_answer("1999") == "1999");
    // Dropping a trailing article exposes new terminal punctuation.
    CHECK(normalize_answer("cat. the") == "cat");
}

TEST_CASE("normalize_answer is idempotent") {
    std::vector<std::string> samples = {
        "The  Eiffel Tower.",  "a",        "A THE an",  "cat. the.",
        "  spaced   out  !?",  "Mt. Fuji", "O'Brien's", "42.",
        "the quick brown fox", "",         "'quoted'",  "x  the  y",
    };
    for (const auto& s : samples) {
        std::string once = normalize_answer(s);
        CHECK(normalize_answer(once) == once);
    }
}

TEST_CASE("to_lower, trim, tokens") {
    CHECK(to_lower("MiXeD 123") == "mixed 123");
    CHECK(trim("  x y \t") == "x y");
    CHECK(trim("") == "");
    CHECK(token_count("one two  three\nfour") == 4);
    CHECK(token_count("   ") == 0);
    auto toks = ws_tokens(" a bb  ccc ");
    REQUIRE(toks.size() == 3);
    CHECK(toks[0] == "a");
    CHECK(toks[2] == "ccc");
}

TEST_CASE("ci_contains is raw case-insensitive substring") {
    CHECK(ci_contains("The Mark Kelly file", "mark kelly"));
    CHECK(ci_contains("xylophone", "ylo"));
    CHECK_FALSE(ci_contains("abc", "abd"));
    CHECK_FALSE(ci_contains("abc", ""));
}

TEST_CASE("normalized_contains respects token boundaries") {
    CHECK(normalized_contains("He said The  Eiffel Tower. stands", "eiffel tower"));
    CHECK(normalized_contains("it is Paris.", "paris"));
    CHECK_FALSE(normalized_contains("xylophone", "x"));
    CHECK_FALSE(normalized_contains("OverR10 GateR10", "OverR1 GateR1"));
    CHECK(normalized_contains("OverR1 GateR1 speaking", "OverR1 GateR1"));
    CHECK_FALSE(normalized_contains("anything", ""));
    CHECK_FALSE(normalized_contains("", "x"));
}

TEST_CASE("ci_replace_word swaps whole words only") {
    std::string text = "X won in 1999. X again in 2001.";
    std::size_t n = ci_replace_word(text, "X", "Y");
    CHECK(n == 2);
    CHECK(text == "Y won in 1999. Y again in 2001.");
    CHECK_FALSE(normalized_contains(text, "X"));

    std::string partial = "Max X and Xavier";
    n = ci_replace_word(partial, "X", "Z");
    CHECK(n == 1);
    CHECK(partial == "Max Z and Xavier");

    std::string none = "nothing here";
    CHECK(ci_replace_word(none, "absent", "y") == 0);
    CHECK(none == "nothing here");

    std::string cased = "ALPHA beta Alpha";
    CHECK(ci_replace_word(cased, "alpha", "gamma") == 2);
    CHECK(cased == "gamma beta gamma");
}
