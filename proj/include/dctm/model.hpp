#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "dctm/conv.hpp"
#include "dctm/fusion.hpp"
#include "dctm/transformer.hpp"

namespace dctm {

// none: raw features go straight to fusion; traditional: dilation 1 on every
// layer; dilated: configured dilations.
enum class ConvMode { None, Traditional, Dilated };

ConvMode parse_conv_mode(const std::string& text);
std::string to_string(ConvMode mode);

struct ModelSpec {
    std::vector<Modality> modalities{Modality::Head, Modality::Pose, Modality::Voice};  // fusion order
    std::array<std::size_t, kNumModalities> input_dims{1, 1, 1};
    ConvMode conv_mode = ConvMode::Dilated;
    std::vector<std::size_t> kernels{5, 5, 3};
    std::vector<std::size_t> dilations{4, 4, 4};
    std::vector<std::size_t> channels{64, 64, 64};
    Activation conv_activation = Activation::Relu;
    FusionKind fusion = FusionKind::SelfAttentionConcat;
    TransformerConfig transformer;
    std::uint64_t seed = 42;

    std::vector<ConvLayerSpec> conv_specs(Modality m) const;
    // 1 when convolution is disabled.
    std::size_t receptive_field() const;
};

template <typename T>
struct ModelOutput {
    Tensor<T> scores;                   // [B, T], in (0, 1)
    std::vector<Tensor<T>> attention;   // [B, H, T, T] per attention block
    std::vector<Tensor<T>> gates;       // GMU gates, innermost first
};

/// Per-modality conv stacks -> fusion -> transformer -> sigmoid head.
template <typename T>
class DctmModel {
public:
    explicit DctmModel(const ModelSpec& spec);

    // inputs indexed by Modality; inactive modalities may be left undefined.
    // Each active input is [B, C_m, T].
    ModelOutput<T> forward(const std::array<Tensor<T>, kNumModalities>& inputs, bool training);

    const ModelSpec& spec() const { return spec_; }
    std::vector<Tensor<T>> parameters() const;

    std::optional<ConvStack<T>>& conv(Modality m) { return convs_[index_of(m)]; }
    Fusion<T>& fusion() { return fusion_; }
    Transformer<T>& transformer() { return transformer_; }
    Linear<T>& head() { return head_; }

    void reseed_dropout(std::uint64_t seed) { dropout_rng_.seed(seed); }

private:
    ModelSpec spec_;
    std::array<std::optional<ConvStack<T>>, kNumModalities> convs_;
    Fusion<T> fusion_;
    Transformer<T> transformer_;
    Linear<T> head_;
    std::mt19937_64 dropout_rng_;
};

} // namespace dctm
