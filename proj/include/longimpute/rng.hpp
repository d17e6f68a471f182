#pragma once

#include <cstdint>
#include <random>

namespace longimpute {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

// Seed for sub-stream `stream` of `seed`. Streams are independent of the order
// in which they are consumed, so parallel work stays reproducible.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

Rng make_rng(std::uint64_t seed, std::uint64_t stream);

}  // namespace longimpute
