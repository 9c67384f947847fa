#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace tfim {

// All sampling draws from std::mt19937_64. Independent streams are seeded
// through SplitMix64 so that nearby integer seeds give unrelated streams.
using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seed of stream `index` derived from `seed`: splitmix64(seed ^ splitmix64(index)).
constexpr std::uint64_t split_seed(std::uint64_t seed, std::uint64_t index) noexcept {
    return splitmix64(seed ^ splitmix64(index));
}

// Order-sensitive hash of several words, used to derive seeds from cache keys.
inline std::uint64_t hash_words(std::initializer_list<std::uint64_t> words) noexcept {
    std::uint64_t h = 0x6a09e667f3bcc909ULL;
    for (auto w : words) h = splitmix64(h ^ w);
    return h;
}

// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) noexcept { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Uniform integer in [0, n) by multiply-shift on the top 32 bits.
inline std::uint32_t uniform_index(Rng& rng, std::uint32_t n) noexcept {
    return static_cast<std::uint32_t>(((rng() >> 32) * static_cast<std::uint64_t>(n)) >> 32);
}

inline bool coin(Rng& rng) noexcept { return (rng() >> 63) != 0; }

} // namespace tfim
