#include "kcp/text.hpp"

#include <cctype>

namespace kcp {

namespace {

bool is_space(unsigned char c) { return std::isspace(c) != 0; }
bool is_alnum(unsigned char c) { return std::isalnum(c) != 0; }

bool is_terminal_punct(unsigned char c) {
    switch (c) {
        case '.':
        case ',':
        case '!':
        case '?':
        case ';':
        case ':':
        case '"':
        case '\'':
            return true;
        default:
            return false;
    }
}

bool is_article(std::string_view tok) {
    return tok == "a" || tok == "an" || tok == "the";
}

std::string normalize_once(std::string_view s) {
    std::string lowered = to_lower(s);

    // Trim, then peel punctuation off the end of the string.
    std::size_t b = 0, e = lowered.size();
    while (b < e && is_space(static_cast<unsigned char>(lowered[b]))) ++b;
    while (e > b && is_space(static_cast<unsigned char>(lowered[e - 1]))) --e;
    while (e > b && is_terminal_punct(static_cast<unsigned char>(lowered[e - 1]))) --e;
    while (e > b && is_space(static_cast<unsigned char>(lowered[e - 1]))) --e;

    std::string out;
    out.reserve(e - b);
    std::size_t i = b;
    while (i < e) {
        while (i < e && is_space(static_cast<unsigned char>(lowered[i]))) ++i;
        std::size_t start = i;
        while (i < e && !is_space(static_cast<unsigned char>(lowered[i]))) ++i;
        if (start == i) break;
        std::string_view tok(lowered.data() + start, i - start);
        if (is_article(tok)) continue;
        if (!out.empty()) out.push_back(' ');
        out.append(tok);
    }
    return out;
}

}  // namespace

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> ws_tokens(std::string_view s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && is_space(static_cast<unsigned char>(s[i]))) ++i;
        std::size_t start = i;
        while (i < s.size() && !is_space(static_cast<unsigned char>(s[i]))) ++i;
        if (i > start) out.emplace_back(s.substr(start, i - start));
    }
    return out;
}

std::size_t token_count(std::string_view s) {
    std::size_t n = 0, i = 0;
    while (i < s.size()) {
        while (i < s.size() && is_space(static_cast<unsigned char>(s[i]))) ++i;
        std::size_t start = i;
        while (i < s.size() && !is_space(static_cast<unsigned char>(s[i]))) ++i;
        if (i > start) ++n;
    }
    return n;
}

std::string normalize_answer(std::string_view s) {
    // A single pass is not idempotent: dropping an article can expose new
    // terminal punctuation ("cat. the" -> "cat."). Each pass never grows the
    // string, so the loop terminates.
    std::string cur(s);
    for (;;) {
        std::string next = normalize_once(cur);
        if (next == cur) return next;
        cur = std::move(next);
    }
}

bool ci_contains(std::string_view hay, std::string_view needle) {
    if (needle.empty()) return false;
    std::string h = to_lower(hay);
    std::string n = to_lower(needle);
    return h.find(n) != std::string::npos;
}

bool normalized_contains(std::string_view hay, std::string_view needle) {
    std::string h = normalize_answer(hay);
    std::string n = normalize_answer(needle);
    if (n.empty() || h.size() < n.size()) return false;
    std::size_t pos = 0;
    while ((pos = h.find(n, pos)) != std::string::npos) {
        bool left_ok =
            pos == 0 || !is_alnum(static_cast<unsigned char>(h[pos - 1]));
        std::size_t end = pos + n.size();
        bool right_ok =
            end == h.size() || !is_alnum(static_cast<unsigned char>(h[end]));
        if (left_ok && right_ok) return true;
        ++pos;
    }
    return false;
}

std::size_t ci_replace_word(std::string& text, std::string_view from, std::string_view to) {
    if (from.empty()) return 0;
    std::string hay = to_lower(text);
    std::string pat = to_lower(from);

    std::string out;
    out.reserve(text.size());
    std::size_t replaced = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        std::size_t pos = hay.find(pat, i);
        if (pos == std::string::npos) {
            out.append(text, i, text.size() - i);
            break;
        }
        bool left_ok = pos == 0 || !is_alnum(static_cast<unsigned char>(hay[pos - 1]));
        std::size_t end = pos + pat.size();
        bool right_ok = end == hay.size() || !is_alnum(static_cast<unsigned char>(hay[end]));
        out.append(text, i, pos - i);
        if (left_ok && right_ok) {
            out.append(to);
            ++replaced;
        } else {
            out.append(text, pos, pat.size());
        }
        i = end;
    }
    if (replaced > 0) text = std::move(out);
    return replaced;
}

}  // namespace kcp
