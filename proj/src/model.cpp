#include "dctm/model.hpp"

#include "dctm/random.hpp"

namespace dctm {

ConvMode parse_conv_mode(const std::string& text) {
    if (text == "none") return ConvMode::None;
    if (text == "traditional") return ConvMode::Traditional;
    if (text == "dilated") return ConvMode::Dilated;
    throw ConfigError("unknown conv mode '" + text + "' (expected none|traditional|dilated)");
}

std::string to_string(ConvMode mode) {
    switch (mode) {
    case ConvMode::None: return "none";
    case ConvMode::Traditional: return "traditional";
    case ConvMode::Dilated: return "dilated";
    }
    return "?";
}

std::vector<ConvLayerSpec> ModelSpec::conv_specs(Modality m) const {
    if (conv_mode == ConvMode::None) return {};
    std::vector<std::size_t> dil = dilations;
    if (conv_mode == ConvMode::Traditional) dil.assign(kernels.size(), 1);
    return make_stack_specs(input_dims[index_of(m)], kernels, dil, channels);
}

std::size_t ModelSpec::receptive_field() const {
    if (conv_mode == ConvMode::None) return 1;
    // independent of channel counts, so unresolved input dims are fine here
    return dctm::receptive_field(make_stack_specs(1, kernels, conv_mode == ConvMode::Traditional
                                                                  ? std::vector<std::size_t>(kernels.size(), 1)
                                                                  : dilations,
                                                  std::vector<std::size_t>(kernels.size(), 1)));
}

template <typename T>
DctmModel<T>::DctmModel(const ModelSpec& spec) : spec_(spec), dropout_rng_(derive_seed(spec.seed, 7)) {
    if (spec_.modalities.empty()) throw ConfigError("model: no active modalities");
    spec_.transformer.validate();
    std::mt19937_64 init_rng(derive_seed(spec_.seed, 1));
    std::vector<std::size_t> fused_channels;
    for (Modality m : spec_.modalities) {
        if (spec_.input_dims[index_of(m)] == 0) {
            throw ConfigError("model: modality '" + to_string(m) + "' has zero input features");
        }
        if (spec_.conv_mode == ConvMode::None) {
            fused_channels.push_back(spec_.input_dims[index_of(m)]);
        } else {
            convs_[index_of(m)].emplace("conv." + to_string(m), spec_.conv_specs(m), spec_.conv_activation, init_rng);
            fused_channels.push_back(convs_[index_of(m)]->out_channels());
        }
    }
    fusion_ = Fusion<T>(spec_.fusion, spec_.modalities, fused_channels, spec_.transformer.hidden, init_rng);
    transformer_ = Transformer<T>(spec_.transformer, init_rng);
    head_ = Linear<T>("head", spec_.transformer.hidden, 1, init_rng, true, LinearInit::FanIn);
}

template <typename T>
ModelOutput<T> DctmModel<T>::forward(const std::array<Tensor<T>, kNumModalities>& inputs, bool training) {
    std::vector<Tensor<T>> features;
    for (Modality m : spec_.modalities) {
        const auto& x = inputs[index_of(m)];
        if (!x.defined()) throw ContractError("model: missing input for modality '" + to_string(m) + "'");
        if (x.rank() != 3 || x.dim(1) != spec_.input_dims[index_of(m)]) {
            throw DimensionError("model: modality '" + to_string(m) + "' input " + shape_str(x.shape()) +
                                 " does not carry " + std::to_string(spec_.input_dims[index_of(m)]) + " features");
        }
        const auto& stack = convs_[index_of(m)];
        features.push_back(stack ? stack->forward(x) : x);
    }
    auto fused = fusion_.forward(features);
    auto encoded = transformer_.forward(fused.tokens, training, dropout_rng_);
    ModelOutput<T> out;
    out.scores = regression_head(encoded.decoded, head_);
    out.attention = std::move(encoded.attention);
    out.gates = std::move(fused.gates);
    return out;
}

template <typename T>
std::vector<Tensor<T>> DctmModel<T>::parameters() const {
    std::vector<Tensor<T>> out;
    for (Modality m : spec_.modalities) {
        if (convs_[index_of(m)]) convs_[index_of(m)]->collect(out);
    }
    fusion_.collect(out);
    transformer_.collect(out);
    head_.collect(out);
    return out;
}

template class DctmModel<float>;
template class DctmModel<double>;

} // namespace dctm
