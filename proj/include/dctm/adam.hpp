#pragma once

#include <cstdint>
#include <vector>

#include "dctm/tensor.hpp"

namespace dctm {

struct AdamOptions {
    double lr = 1e-6;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
struct AdamState {
    AdamOptions options;
    std::uint64_t step = 0;
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;
};

template <typename T>
AdamState<T> make_adam_state(const std::vector<Tensor<T>>& params, AdamOptions options);

/// Bias-corrected Adam update applied in place to every parameter from its
/// accumulated gradient. Throws NumericalError naming the first parameter
/// whose gradient holds a NaN/Inf; no parameter is touched in that case.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state);

template <typename T>
void zero_grads(std::vector<Tensor<T>>& params);

} // namespace dctm
