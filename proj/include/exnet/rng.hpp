#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace exnet {

using Rng = std::mt19937_64;

/// Independent generator for `(seed, stream)`; every stochastic stage draws
/// from its own stream so results do not depend on evaluation order.
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

/// Derives a child seed from a parent seed and a stream tag.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// FNV-1a, used to turn labels (subjects, ids) into stable stream tags.
std::uint64_t stable_hash(std::string_view text);

}  // namespace exnet
