#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace kcp {

inline constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ull;

inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t h = kFnvOffset) {
    for (unsigned char c : data) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

inline std::string to_hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

// Accumulates length-delimited fields so that add("ab").add("c") and
// add("a").add("bc") hash differently. Used for snapshot ids, cache keys
// and stage keys; stable across platforms and runs.
class ContentHash {
  public:
    ContentHash& add(std::string_view field) {
        h_ = fnv1a64(std::to_string(field.size()), h_);
        h_ = fnv1a64("\x1f", h_);
        h_ = fnv1a64(field, h_);
        return *this;
    }

    ContentHash& add_u64(std::uint64_t v) { return add(std::to_string(v)); }
    ContentHash& add_double(double v) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return add(buf);
    }
    ContentHash& add_bool(bool v) { return add(v ? "1" : "0"); }

    std::uint64_t value() const { return h_; }
    std::string hex() const { return to_hex64(h_); }

  private:
    std::uint64_t h_ = kFnvOffset;
};

}  // namespace kcp
