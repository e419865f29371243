#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include <Eigen/Core>

namespace scmal {

using Rng = std::mt19937_64;

/// Deterministically combines a base seed with a list of keys (trial, step,
/// candidate index, ...) into a new seed. Distinct key lists give unrelated
/// streams.
std::uint64_t mix_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys);

inline Rng substream(std::uint64_t base, std::initializer_list<std::uint64_t> keys)
{
    return Rng(mix_seed(base, keys));
}

/// Fills a vector with independent standard normal draws.
Eigen::VectorXd standard_normals(Eigen::Index count, Rng& rng);

}  // namespace scmal
