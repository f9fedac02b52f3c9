#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace rulehte {

using Rng = std::mt19937_64;

/// Deterministic child seed from a master seed and a path of indices
/// (splitmix64 finalizer chained over the components).
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    auto mix = [](std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    };
    std::uint64_t h = mix(master);
    for (auto v : path) h = mix(h ^ mix(v));
    return h;
}

}  // namespace rulehte
