#pragma once

#include <cstdint>
#include <random>

#include "dctm/tensor.hpp"

namespace dctm {

// SplitMix64 finalizer; derives independent stream seeds from one master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

// Uniform double in [0, 1) from the top 53 bits of one draw.
double uniform01(std::mt19937_64& rng);

// Xavier/Glorot uniform: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
template <typename T>
Tensor<T> xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

template <typename T>
Tensor<T> uniform_tensor(Shape shape, T lo, T hi, std::mt19937_64& rng);

template <typename T>
Tensor<T> normal_tensor(Shape shape, T stddev, std::mt19937_64& rng);

} // namespace dctm
