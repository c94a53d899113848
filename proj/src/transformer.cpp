#include "dctm/transformer.hpp"

#include <cmath>

namespace dctm {

void TransformerConfig::validate() const {
    if (hidden == 0 || heads == 0) throw ConfigError("transformer: hidden size and heads must be positive");
    if (hidden % heads != 0) {
        throw ConfigError("transformer: hidden size " + std::to_string(hidden) + " not divisible by " +
                          std::to_string(heads) + " heads");
    }
    if (positional && hidden % 2 != 0) throw ConfigError("transformer: positional encoding needs an even hidden size");
    if (ff_dim == 0) throw ConfigError("transformer: feedforward width must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("transformer: dropout must be in [0, 1)");
}

template <typename T>
Tensor<T> positional_encoding(std::size_t frames, std::size_t dim) {
    if (frames == 0 || dim == 0 || dim % 2 != 0) {
        throw DimensionError("positional_encoding: need frames >= 1 and an even dim >= 2");
    }
    std::vector<T> table(frames * dim);
    for (std::size_t p = 0; p < frames; ++p) {
        for (std::size_t i = 0; i < dim / 2; ++i) {
            const double freq = std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(dim));
            const double angle = static_cast<double>(p) / freq;
            table[p * dim + 2 * i] = static_cast<T>(std::sin(angle));
            table[p * dim + 2 * i + 1] = static_cast<T>(std::cos(angle));
        }
    }
    return Tensor<T>::from({frames, dim}, std::move(table));
}

template <typename T>
AttentionWeights<T>::AttentionWeights(const std::string& name, std::size_t dim, std::mt19937_64& rng)
    : query(name + ".query", dim, dim, rng),
      key(name + ".key", dim, dim, rng),
      value(name + ".value", dim, dim, rng),
      output(name + ".output", dim, dim, rng) {}

template <typename T>
void AttentionWeights<T>::collect(std::vector<Tensor<T>>& out) const {
    query.collect(out);
    key.collect(out);
    value.collect(out);
    output.collect(out);
}

template <typename T>
AttentionOutput<T> multi_head_attention(const Tensor<T>& query_src, const Tensor<T>& memory,
                                        const AttentionWeights<T>& weights, std::size_t heads) {
    if (query_src.rank() != 3 || memory.rank() != 3) {
        throw DimensionError("attention: inputs must be [B, T, D], got " + shape_str(query_src.shape()) + " and " +
                             shape_str(memory.shape()));
    }
    const std::size_t batch = query_src.dim(0);
    const std::size_t tq = query_src.dim(1);
    const std::size_t dim = query_src.dim(2);
    const std::size_t tk = memory.dim(1);
    if (memory.dim(0) != batch || memory.dim(2) != dim) {
        throw DimensionError("attention: memory " + shape_str(memory.shape()) + " incompatible with query " +
                             shape_str(query_src.shape()));
    }
    if (heads == 0 || dim % heads != 0) {
        throw DimensionError("attention: dim " + std::to_string(dim) + " not divisible by " + std::to_string(heads) +
                             " heads");
    }
    const std::size_t head_dim = dim / heads;
    auto split = [&](const Tensor<T>& x, std::size_t len) {
        return permute(reshape(x, {batch, len, heads, head_dim}), {0, 2, 1, 3});  // [B, H, T, dh]
    };
    Tensor<T> q = split(weights.query(query_src), tq);
    Tensor<T> k = split(weights.key(memory), tk);
    Tensor<T> v = split(weights.value(memory), tk);
    Tensor<T> scores = scale(matmul(q, permute(k, {0, 1, 3, 2})), T(1) / std::sqrt(static_cast<T>(head_dim)));
    Tensor<T> attn = softmax(scores, 3);
    Tensor<T> context = reshape(permute(matmul(attn, v), {0, 2, 1, 3}), {batch, tq, dim});
    return {weights.output(context), attn};
}

template <typename T>
Transformer<T>::Transformer(const TransformerConfig& config, std::mt19937_64& rng) : config_(config) {
    config_.validate();
    const std::size_t d = config_.hidden;
    for (std::size_t i = 0; i < config_.encoder_layers; ++i) {
        const std::string p = "encoder." + std::to_string(i);
        encoder_.push_back({AttentionWeights<T>(p + ".self_attn", d, rng), LayerNorm<T>(p + ".norm1", d),
                            FeedForward<T>(p + ".ff", d, config_.ff_dim, rng), LayerNorm<T>(p + ".norm2", d)});
    }
    for (std::size_t i = 0; i < config_.decoder_layers; ++i) {
        const std::string p = "decoder." + std::to_string(i);
        decoder_.push_back({AttentionWeights<T>(p + ".self_attn", d, rng), LayerNorm<T>(p + ".norm1", d),
                            AttentionWeights<T>(p + ".cross_attn", d, rng), LayerNorm<T>(p + ".norm2", d),
                            FeedForward<T>(p + ".ff", d, config_.ff_dim, rng), LayerNorm<T>(p + ".norm3", d)});
    }
}

template <typename T>
TransformerOutput<T> Transformer<T>::forward(const Tensor<T>& tokens, bool training,
                                             std::mt19937_64& dropout_rng) const {
    if (tokens.rank() != 3 || tokens.dim(2) != config_.hidden) {
        throw DimensionError("transformer: tokens " + shape_str(tokens.shape()) + " do not have hidden size " +
                             std::to_string(config_.hidden));
    }
    const T p = static_cast<T>(config_.dropout);
    auto drop = [&](const Tensor<T>& x) { return dropout(x, p, dropout_rng, training); };

    TransformerOutput<T> out;
    Tensor<T> x = tokens;
    if (config_.positional) x = add(x, positional_encoding<T>(tokens.dim(1), config_.hidden));
    x = drop(x);
    const Tensor<T> decoder_input = x;

    for (const auto& layer : encoder_) {
        auto sa = multi_head_attention(x, x, layer.self_attn, config_.heads);
        out.attention.push_back(sa.weights);
        x = layer.norm1(add(x, drop(sa.out)));
        x = layer.norm2(add(x, drop(layer.ff(x))));
    }
    const Tensor<T> memory = x;

    Tensor<T> y = decoder_input;
    for (const auto& layer : decoder_) {
        auto sa = multi_head_attention(y, y, layer.self_attn, config_.heads);
        out.attention.push_back(sa.weights);
        y = layer.norm1(add(y, drop(sa.out)));
        auto ca = multi_head_attention(y, memory, layer.cross_attn, config_.heads);
        out.attention.push_back(ca.weights);
        y = layer.norm2(add(y, drop(ca.out)));
        y = layer.norm3(add(y, drop(layer.ff(y))));
    }
    // Without decoder layers the encoder output is the decoded sequence.
    out.decoded = decoder_.empty() ? memory : y;
    return out;
}

template <typename T>
void Transformer<T>::collect(std::vector<Tensor<T>>& out) const {
    for (const auto& l : encoder_) {
        l.self_attn.collect(out);
        l.norm1.collect(out);
        l.ff.collect(out);
        l.norm2.collect(out);
    }
    for (const auto& l : decoder_) {
        l.self_attn.collect(out);
        l.norm1.collect(out);
        l.cross_attn.collect(out);
        l.norm2.collect(out);
        l.ff.collect(out);
        l.norm3.collect(out);
    }
}

template <typename T>
Tensor<T> regression_head(const Tensor<T>& decoded, const Linear<T>& head) {
    if (head.out_features() != 1) throw DimensionError("regression_head: projection must output one value");
    if (decoded.rank() != 3) throw DimensionError("regression_head: expected [B, T, D], got " + shape_str(decoded.shape()));
    Tensor<T> logits = head(decoded);
    return sigmoid(reshape(logits, {decoded.dim(0), decoded.dim(1)}));
}

#define DCTM_INSTANTIATE_TRANSFORMER(T)                                                                   \
    template Tensor<T> positional_encoding<T>(std::size_t, std::size_t);                                  \
    template struct AttentionWeights<T>;                                                                  \
    template AttentionOutput<T> multi_head_attention<T>(const Tensor<T>&, const Tensor<T>&,               \
                                                        const AttentionWeights<T>&, std::size_t);         \
    template class Transformer<T>;                                                                        \
    template Tensor<T> regression_head<T>(const Tensor<T>&, const Linear<T>&);

DCTM_INSTANTIATE_TRANSFORMER(float)
DCTM_INSTANTIATE_TRANSFORMER(double)

} // namespace dctm
