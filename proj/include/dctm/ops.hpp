#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "dctm/tensor.hpp"

namespace dctm {

// Batched matrix product over the last two axes. Leading (batch) axes
// broadcast numpy-style; a rank-2 right operand is shared across the batch.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// Broadcasting binary ops.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

// Unary ops.
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset);
template <typename T>
Tensor<T> tanh(const Tensor<T>& x);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Tensor<T> relu(const Tensor<T>& x);

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

// Normalizes over the last axis (population variance), then applies
// gain/bias of shape [D].
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-5));

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& order);
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);

// Inverted dropout: kept entries are scaled by 1/(1-p). Identity when
// training is false or p == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, T p, std::mt19937_64& rng, bool training);

// Length-preserving dilated 1-D convolution.
//   x: [B, C_in, T], weight: [C_out, C_in, K] (K odd), bias: [C_out] or undefined.
//   y[b,o,p] = bias[o] + sum_c sum_t weight[o,c,t] * x[b,c,p + dilation*(t - (K-1)/2)]
// with zeros outside [0, T).
template <typename T>
Tensor<T> dilated_conv1d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                         std::size_t dilation);

namespace fault {
// Negative-control hook for the verify suite: when set, the convolution
// backward pass returns a perturbed input gradient.
void set_corrupt_conv_backward(bool enabled);
bool corrupt_conv_backward();
} // namespace fault

} // namespace dctm
