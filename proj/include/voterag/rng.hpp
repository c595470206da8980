#pragma once

#include <cstdint>
#include <string_view>

namespace voterag {

// SplitMix64 (Steele, Lea & Flood, "Fast splittable pseudorandom number
// generators", OOPSLA 2014). Chosen because the algorithm is fully specified
// by two constants, so seeded streams are reproducible on any platform.
struct SplitMix64 {
    std::uint64_t state = 0;

    explicit SplitMix64(std::uint64_t seed = 0) : state(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1), 53-bit mantissa
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    bool next_bernoulli(double p) { return next_double() < p; }
};

// Finalizer of SplitMix64, used as a 64-bit mixing function.
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// FNV-1a, for folding string ids into stream derivation.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

// Derives an independent sub-stream from (seed, domain, index). Each trial,
// agent, or question gets its own stream, so a run can be partitioned across
// workers without changing any draw.
inline SplitMix64 make_stream(std::uint64_t seed, std::uint64_t domain,
                              std::uint64_t index = 0) {
    return SplitMix64(mix64(mix64(mix64(seed) ^ domain) ^ index));
}

}  // namespace voterag
