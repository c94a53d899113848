#include "dctm/conv.hpp"

namespace dctm {

void ConvLayerSpec::validate() const {
    if (in_channels == 0 || out_channels == 0) throw DimensionError("conv layer: channel counts must be positive");
    if (kernel_size == 0 || kernel_size % 2 == 0) {
        throw DimensionError("conv layer: kernel size must be a positive odd integer, got " +
                             std::to_string(kernel_size));
    }
    if (dilation == 0) throw DimensionError("conv layer: dilation must be >= 1");
}

Activation parse_activation(const std::string& text) {
    if (text == "relu") return Activation::Relu;
    if (text == "none") return Activation::None;
    throw ConfigError("unknown activation '" + text + "' (expected relu|none)");
}

std::string to_string(Activation act) { return act == Activation::Relu ? "relu" : "none"; }

std::size_t receptive_field(const std::vector<ConvLayerSpec>& stack) {
    if (stack.empty()) throw ContractError("receptive_field: empty stack");
    std::size_t rf = 1;
    for (const auto& s : stack) rf += s.dilation * (s.kernel_size - 1);
    return rf;
}

std::vector<ConvLayerSpec> make_stack_specs(std::size_t in_channels, const std::vector<std::size_t>& kernels,
                                            const std::vector<std::size_t>& dilations,
                                            const std::vector<std::size_t>& channels) {
    if (kernels.size() != dilations.size() || kernels.size() != channels.size()) {
        throw ConfigError("conv stack: kernels, dilations and channels must have the same length");
    }
    std::vector<ConvLayerSpec> specs;
    std::size_t cin = in_channels;
    for (std::size_t i = 0; i < kernels.size(); ++i) {
        ConvLayerSpec s{cin, channels[i], kernels[i], dilations[i], true};
        s.validate();
        specs.push_back(s);
        cin = channels[i];
    }
    return specs;
}

template <typename T>
Tensor<T> dilated_conv1d(const Tensor<T>& x, const ConvLayerSpec& spec, const Tensor<T>& weight,
                         const Tensor<T>& bias) {
    spec.validate();
    if (x.rank() != 3 || x.dim(1) != spec.in_channels) {
        throw DimensionError("dilated_conv1d: input " + shape_str(x.shape()) + " does not carry " +
                             std::to_string(spec.in_channels) + " channels");
    }
    if (weight.shape() != Shape{spec.out_channels, spec.in_channels, spec.kernel_size}) {
        throw DimensionError("dilated_conv1d: weight " + shape_str(weight.shape()) + " does not match layer spec");
    }
    if (spec.has_bias != bias.defined()) throw DimensionError("dilated_conv1d: bias presence disagrees with spec");
    return dilated_conv1d(x, weight, bias, spec.dilation);
}

template <typename T>
ConvStack<T>::ConvStack(const std::string& name, std::vector<ConvLayerSpec> specs, Activation activation,
                        std::mt19937_64& rng)
    : specs_(std::move(specs)), activation_(activation) {
    if (specs_.empty()) throw ContractError("conv stack '" + name + "' has no layers");
    for (std::size_t i = 0; i < specs_.size(); ++i) {
        const auto& s = specs_[i];
        s.validate();
        if (i > 0 && specs_[i - 1].out_channels != s.in_channels) {
            throw DimensionError("conv stack '" + name + "': layer " + std::to_string(i) +
                                 " input channels do not match previous output");
        }
        const std::string prefix = name + "." + std::to_string(i);
        weights_.push_back(make_parameter(
            xavier_uniform<T>({s.out_channels, s.in_channels, s.kernel_size}, s.in_channels * s.kernel_size,
                              s.out_channels * s.kernel_size, rng),
            prefix + ".weight"));
        biases_.push_back(s.has_bias ? make_parameter(Tensor<T>::zeros({s.out_channels}), prefix + ".bias")
                                     : Tensor<T>());
    }
}

template <typename T>
Tensor<T> ConvStack<T>::forward(const Tensor<T>& x) const {
    Tensor<T> h = x;
    for (std::size_t i = 0; i < specs_.size(); ++i) {
        h = dilated_conv1d(h, specs_[i], weights_[i], biases_[i]);
        if (i + 1 < specs_.size() && activation_ == Activation::Relu) h = relu(h);
    }
    return h;
}

template <typename T>
void ConvStack<T>::collect(std::vector<Tensor<T>>& out) const {
    for (std::size_t i = 0; i < specs_.size(); ++i) {
        out.push_back(weights_[i]);
        if (biases_[i].defined()) out.push_back(biases_[i]);
    }
}

template Tensor<float> dilated_conv1d<float>(const Tensor<float>&, const ConvLayerSpec&, const Tensor<float>&,
                                             const Tensor<float>&);
template Tensor<double> dilated_conv1d<double>(const Tensor<double>&, const ConvLayerSpec&, const Tensor<double>&,
                                               const Tensor<double>&);
template class ConvStack<float>;
template class ConvStack<double>;

} // namespace dctm
