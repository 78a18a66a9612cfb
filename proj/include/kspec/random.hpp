#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace kspec {

// Uniform integer in [0, bound) drawn from a 64-bit Mersenne Twister by
// rejection sampling. std::uniform_int_distribution is implementation
// defined, so it is avoided wherever results must be reproducible.
std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t bound);

// Fisher-Yates permutation of 0..n-1, a pure function of (n, seed).
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

}  // namespace kspec
