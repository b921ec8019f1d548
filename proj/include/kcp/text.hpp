#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace kcp {

std::string to_lower(std::string_view s);  // ASCII only; other bytes pass through
std::string trim(std::string_view s);
std::vector<std::string> ws_tokens(std::string_view s);
std::size_t token_count(std::string_view s);  // whitespace-delimited tokens

// Canonical answer form used by every equality/containment decision:
// lowercase, trim, strip terminal punctuation, collapse internal whitespace,
// drop the English articles a/an/the at token boundaries. Runs the transform
// to a fixed point so normalize_answer(normalize_answer(x)) == normalize_answer(x).
std::string normalize_answer(std::string_view s);

// Raw case-insensitive substring test (no normalization). This is the rule
// for overinclusion containment, which is checked against unnormalized
// context text.
bool ci_contains(std::string_view hay, std::string_view needle);

// True when normalize_answer(needle) occurs inside normalize_answer(hay)
// with non-alphanumeric characters (or string ends) on both sides, so "x"
// does not match inside "xylophone". Used for verdicts, residual-answer
// checks and distractor answerability screening.
bool normalized_contains(std::string_view hay, std::string_view needle);

// Case-insensitive whole-word replacement of `from` by `to` (verbatim, the
// casing of `to` is preserved as written). Returns the number of
// occurrences replaced.
std::size_t ci_replace_word(std::string& text, std::string_view from, std::string_view to);

}  // namespace kcp
