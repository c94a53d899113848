#pragma once

#include <random>
#include <string>
#include <vector>

#include "dctm/layers.hpp"

namespace dctm {

struct ConvLayerSpec {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel_size = 3;  // odd, for symmetric same-padding
    std::size_t dilation = 1;
    bool has_bias = true;

    void validate() const;
};

enum class Activation { None, Relu };

Activation parse_activation(const std::string& text);
std::string to_string(Activation act);

/// 1 + sum_i dilation_i * (kernel_i - 1).
std::size_t receptive_field(const std::vector<ConvLayerSpec>& stack);

/// Chains layer specs: first layer reads `in_channels`, layer i writes
/// channels[i]. All three lists must have equal length.
std::vector<ConvLayerSpec> make_stack_specs(std::size_t in_channels, const std::vector<std::size_t>& kernels,
                                            const std::vector<std::size_t>& dilations,
                                            const std::vector<std::size_t>& channels);

/// Applies one layer; weight and bias shapes must match the ConvLayerSpec.
template <typename T>
Tensor<T> dilated_conv1d(const Tensor<T>& x, const ConvLayerSpec& spec, const Tensor<T>& weight,
                         const Tensor<T>& bias);

// Stack of length-preserving dilated convolutions with an activation between
// consecutive layers (none after the last).
template <typename T>
class ConvStack {
public:
    ConvStack() = default;
    ConvStack(const std::string& name, std::vector<ConvLayerSpec> specs, Activation activation,
              std::mt19937_64& rng);

    Tensor<T> forward(const Tensor<T>& x) const;

    const std::vector<ConvLayerSpec>& specs() const { return specs_; }
    std::size_t out_channels() const { return specs_.back().out_channels; }
    std::size_t receptive_field() const { return dctm::receptive_field(specs_); }

    std::vector<Tensor<T>>& weights() { return weights_; }
    std::vector<Tensor<T>>& biases() { return biases_; }
    void collect(std::vector<Tensor<T>>& out) const;

private:
    std::vector<ConvLayerSpec> specs_;
    Activation activation_ = Activation::Relu;
    std::vector<Tensor<T>> weights_;
    std::vector<Tensor<T>> biases_;
};

} // namespace dctm
