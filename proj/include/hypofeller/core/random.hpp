#pragma once

#include <cstdint>
#include <random>

namespace hfl {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Stream identifiers, so that subordinator and Gaussian draws of one path never share a generator.
enum class Stream : std::uint64_t {
    subordinator = 0x5ab0ULL,
    gaussian = 0x6a55ULL,
    start_x = 0x78ULL,
    start_y = 0x79ULL,
    point = 0x90ULL,
};

/// Seed of the `index`-th path in `stream` under `master`; independent of scheduling.
constexpr std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t index) noexcept {
    return mix64(mix64(master ^ mix64(static_cast<std::uint64_t>(stream))) + index);
}

inline Rng make_rng(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    return Rng(seq);
}

}  // namespace hfl
