#pragma once

#include <random>
#include <string>
#include <vector>

#include "dctm/layers.hpp"
#include "dctm/modality.hpp"

namespace dctm {

enum class FusionKind { SelfAttentionConcat, GatedMultimodal };

// Accepts the config spellings "sa" and "gmu".
FusionKind parse_fusion_kind(const std::string& text);
std::string to_string(FusionKind kind);

// Gated multimodal unit:
//   h1 = tanh(W1 x1 + b1), h2 = tanh(W2 x2 + b2), z = sigmoid(Wz [x1; x2] + bz)
//   out = z * h1 + (1 - z) * h2
template <typename T>
struct GmuUnit {
    std::string first_name;
    std::string second_name;
    Linear<T> transform1;
    Linear<T> transform2;
    Linear<T> gate;

    GmuUnit() = default;
    GmuUnit(const std::string& name, std::string first, std::string second, std::size_t d1, std::size_t d2,
            std::size_t d, std::mt19937_64& rng);

    std::size_t out_features() const { return transform1.out_features(); }
    void collect(std::vector<Tensor<T>>& out) const;
};

template <typename T>
struct GmuOutput {
    Tensor<T> fused;
    Tensor<T> gate;  // z, weight on the first input
};

// x1: [B, T, d1], x2: [B, T, d2] -> [B, T, d]
template <typename T>
GmuOutput<T> gmu_fuse(const Tensor<T>& x1, const Tensor<T>& x2, const GmuUnit<T>& unit);

// Per-modality [B, C_m, T] -> concat over channels -> [B, T, sum C_m] -> projection to [B, T, D].
template <typename T>
Tensor<T> fuse_concat(const std::vector<Tensor<T>>& features, const Linear<T>& projection);

template <typename T>
struct HierarchicalOutput {
    Tensor<T> fused;
    std::vector<Tensor<T>> gates;  // innermost first
};

// Folds units left to right: gmu(gmu(f0, f1), f2). Inputs are [B, C_m, T].
template <typename T>
HierarchicalOutput<T> fuse_gated_hierarchical(const std::vector<Tensor<T>>& features,
                                              const std::vector<GmuUnit<T>>& units);

template <typename T>
struct FusionOutput {
    Tensor<T> tokens;               // [B, T, D]
    std::vector<Tensor<T>> gates;   // GMU only
};

/// Owns the fusion parameters for an ordered set of active modalities.
/// With a single active modality the gated variant reduces to tanh(W x + b).
template <typename T>
class Fusion {
public:
    Fusion() = default;
    Fusion(FusionKind kind, std::vector<Modality> order, std::vector<std::size_t> channels, std::size_t hidden,
           std::mt19937_64& rng);

    FusionOutput<T> forward(const std::vector<Tensor<T>>& features) const;

    FusionKind kind() const { return kind_; }
    const std::vector<Modality>& order() const { return order_; }
    const std::vector<GmuUnit<T>>& units() const { return units_; }
    std::vector<GmuUnit<T>>& units() { return units_; }
    const Linear<T>& projection() const { return projection_; }
    Linear<T>& projection() { return projection_; }
    void collect(std::vector<Tensor<T>>& out) const;

private:
    FusionKind kind_ = FusionKind::SelfAttentionConcat;
    std::vector<Modality> order_;
    std::vector<std::size_t> channels_;
    Linear<T> projection_;  // concat projection, or the single-modality gated transform
    std::vector<GmuUnit<T>> units_;
};

} // namespace dctm
