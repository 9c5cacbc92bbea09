#pragma once

#include <cstdint>
#include <random>

#include "mimnet/tensor.hpp"

namespace mimnet {

using Rng = std::mt19937_64;

/// splitmix64 finalizer over (base, salt); derives independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt);

Tensor normal_tensor(Shape shape, double sigma, Rng& rng);

}  // namespace mimnet
