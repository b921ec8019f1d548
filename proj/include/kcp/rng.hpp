#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "kcp/hash.hpp"

namespace kcp {

// splitmix64. Every seeded choice in the pipeline goes through this so that
// datasets rebuild byte-identically on any platform; std::shuffle and the
// std distributions are implementation-defined and would not give that.
class SplitMix64 {
  public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Bounded draw via Lemire's multiply-shift reduction.
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next()) * n) >> 64);
    }

    // Uniform in [0, 1).
    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  private:
    std::uint64_t state_;
};

template <typename T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed) {
    SplitMix64 rng(seed);
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.below(i));
        using std::swap;
        swap(v[i - 1], v[j]);
    }
}

// Decorrelates per-record seeds from the run seed, e.g.
// derive_seed(seed, "ctx/q17/cf").
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view label) {
    return fnv1a64(label, base ^ 0x9e3779b97f4a7c15ull);
}

}  // namespace kcp
