#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace bibmatch::rng {

// All randomness in the project flows through mt19937_64 plus the helpers
// below. The raw mt19937_64 output sequence is fixed by the C++ standard,
// so identical seeds give identical results on every platform. Never use
// std::uniform_*_distribution here; its output is implementation-defined.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Uniform integer in [0, bound) via rejection sampling; bound ≥ 1.
inline std::uint64_t bounded(std::mt19937_64& gen, std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;  // 2^64 mod bound
    for (;;) {
        const std::uint64_t r = gen();
        if (r >= threshold)
            return r % bound;
    }
}

/// Uniform double in [0, 1) with 53 bits of precision.
inline double unit(std::mt19937_64& gen) {
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

/// Independent per-key substream of a master seed.
inline std::mt19937_64 substream(std::uint64_t seed, std::string_view key) {
    return std::mt19937_64(splitmix64(seed ^ fnv1a64(key)));
}

}  // namespace bibmatch::rng
