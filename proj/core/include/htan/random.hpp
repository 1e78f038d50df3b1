#pragma once

#include <cstdint>
#include <random>

#include "htan/tensor.hpp"

namespace htan {

using Rng = std::mt19937_64;

Tensor uniform_tensor(Shape shape, double lo, double hi, Rng& rng);
Tensor normal_tensor(Shape shape, double mean, double stddev, Rng& rng);

}  // namespace htan
