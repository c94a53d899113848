#pragma once

#include <random>
#include <string>
#include <vector>

#include "dctm/layers.hpp"

namespace dctm {

struct TransformerConfig {
    std::size_t encoder_layers = 4;
    std::size_t decoder_layers = 4;
    std::size_t heads = 8;
    std::size_t hidden = 128;
    std::size_t ff_dim = 512;   // 4 * hidden
    double dropout = 0.1;
    bool positional = true;

    void validate() const;
};

// Sinusoidal table: PE(p, 2i) = sin(p / 10000^(2i/D)), PE(p, 2i+1) = cos(...).
template <typename T>
Tensor<T> positional_encoding(std::size_t frames, std::size_t dim);

template <typename T>
struct AttentionWeights {
    Linear<T> query;
    Linear<T> key;
    Linear<T> value;
    Linear<T> output;

    AttentionWeights() = default;
    AttentionWeights(const std::string& name, std::size_t dim, std::mt19937_64& rng);
    void collect(std::vector<Tensor<T>>& out) const;
};

template <typename T>
struct AttentionOutput {
    Tensor<T> out;      // [B, Tq, D]
    Tensor<T> weights;  // [B, H, Tq, Tk], rows sum to 1
};

/// Scaled dot-product attention split over `heads`, unmasked:
/// softmax(Q K^T / sqrt(D / heads)) V per head, heads concatenated then
/// projected. Self-attention passes the same tensor as query and memory.
template <typename T>
AttentionOutput<T> multi_head_attention(const Tensor<T>& query_src, const Tensor<T>& memory,
                                        const AttentionWeights<T>& weights, std::size_t heads);

template <typename T>
struct FeedForward {
    Linear<T> up;
    Linear<T> down;

    FeedForward() = default;
    FeedForward(const std::string& name, std::size_t dim, std::size_t ff_dim, std::mt19937_64& rng)
        : up(name + ".up", dim, ff_dim, rng), down(name + ".down", ff_dim, dim, rng) {}
    Tensor<T> operator()(const Tensor<T>& x) const { return down(relu(up(x))); }
    void collect(std::vector<Tensor<T>>& out) const {
        up.collect(out);
        down.collect(out);
    }
};

template <typename T>
struct EncoderLayer {
    AttentionWeights<T> self_attn;
    LayerNorm<T> norm1;
    FeedForward<T> ff;
    LayerNorm<T> norm2;
};

template <typename T>
struct DecoderLayer {
    AttentionWeights<T> self_attn;
    LayerNorm<T> norm1;
    AttentionWeights<T> cross_attn;
    LayerNorm<T> norm2;
    FeedForward<T> ff;
    LayerNorm<T> norm3;
};

template <typename T>
struct TransformerOutput {
    Tensor<T> decoded;                    // [B, T, D]
    std::vector<Tensor<T>> attention;     // every attention map, encoder first
};

/// Post-norm encoder-decoder run non-autoregressively: the decoder consumes
/// the same token sequence as the encoder and attends to the encoder output.
template <typename T>
class Transformer {
public:
    Transformer() = default;
    Transformer(const TransformerConfig& config, std::mt19937_64& rng);

    TransformerOutput<T> forward(const Tensor<T>& tokens, bool training, std::mt19937_64& dropout_rng) const;

    const TransformerConfig& config() const { return config_; }
    std::vector<EncoderLayer<T>>& encoder() { return encoder_; }
    std::vector<DecoderLayer<T>>& decoder() { return decoder_; }
    void collect(std::vector<Tensor<T>>& out) const;

private:
    TransformerConfig config_;
    std::vector<EncoderLayer<T>> encoder_;
    std::vector<DecoderLayer<T>> decoder_;
};

// Per-frame D -> 1 projection squashed by a sigmoid: [B, T, D] -> [B, T].
template <typename T>
Tensor<T> regression_head(const Tensor<T>& decoded, const Linear<T>& head);

} // namespace dctm
