#pragma once

#include <cstdint>
#include <random>

namespace ncs {

using Rng = std::mt19937_64;

enum class StreamPurpose : std::uint64_t { noise = 1, access = 2, channel = 3, gateway = 4 };

// splitmix64 finalizer
[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Independent stream per (seed, owner, purpose); owner is a loop id or -1
// for the gateway/channel.
[[nodiscard]] inline Rng make_stream(std::uint64_t seed, std::int64_t owner, StreamPurpose purpose) {
    std::uint64_t h = mix64(seed);
    h = mix64(h ^ static_cast<std::uint64_t>(owner + 1));
    h = mix64(h ^ static_cast<std::uint64_t>(purpose));
    std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    return Rng(seq);
}

[[nodiscard]] inline bool bernoulli(Rng& rng, double p) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

} // namespace ncs
