#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "blurcast/tensor.hpp"

namespace blurcast {

using Rng = std::mt19937_64;

/// Derives an independent stream seed from a tuple of integers (splitmix64
/// chain). Streams keyed by (seed, epoch, window) do not depend on the
/// order in which windows are processed.
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> keys);
Rng make_rng(std::initializer_list<std::uint64_t> keys);

Tensor standard_normal(Shape shape, Rng& rng);
Tensor uniform(Shape shape, double lo, double hi, Rng& rng);

}  // namespace blurcast
