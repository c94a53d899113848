#include "doctest.h"

#include <cmath>
#include <set>

#include "dctm/errors.hpp"
#include "dctm/transformer.hpp"
#include "oracles.hpp"

using namespace dctm;
using TD = Tensor<double>;

namespace {

oracle::Vec affine(const oracle::Vec& x, const Linear<double>& lin, std::size_t n) {
    auto y = oracle::matmul(x, oracle::to_vec(lin.weight.data()), n, lin.in_features(), lin.out_features());
    const auto b = oracle::to_vec(lin.bias.data());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < b.size(); ++j) y[i * b.size() + j] += b[j];
    return y;
}

oracle::Vec slice_head(const oracle::Vec& x, std::size_t t, std::size_t dim, std::size_t h, std::size_t dh) {
    oracle::Vec out(t * dh);
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t d = 0; d < dh; ++d) out[i * dh + d] = x[i * dim + h * dh + d];
    return out;
}

TransformerConfig small_config(bool positional) {
    TransformerConfig c;
    c.encoder_layers = 2;
    c.decoder_layers = 2;
    c.heads = 4;
    c.hidden = 16;
    c.ff_dim = 32;
    c.dropout = 0.0;
    c.positional = positional;
    return c;
}

} // namespace

TEST_CASE("positional encoding table") {
    auto pe = positional_encoding<double>(5, 8);
    CHECK(pe.shape() == Shape{5, 8});
    for (std::size_t i = 0; i < 8; ++i) CHECK(pe.at(i) == (i % 2 == 0 ? 0.0 : 1.0));
    CHECK(pe.at(8) == std::sin(1.0));
    CHECK(pe.at(9) == std::cos(1.0));
    auto again = positional_encoding<double>(5, 8);
    CHECK(oracle::to_vec(pe.data()) == oracle::to_vec(again.data()));

    auto big = positional_encoding<double>(10000, 128);
    std::set<std::vector<double>> rows;
    for (std::size_t p = 0; p < 10000; ++p) {
        const auto d = big.data();
        rows.emplace(d.begin() + static_cast<long>(p * 128), d.begin() + static_cast<long>((p + 1) * 128));
    }
    CHECK(rows.size() == 10000);
    CHECK_THROWS_AS(positional_encoding<double>(4, 7), DimensionError);
}

TEST_CASE("attention over a single frame has weight one") {
    std::mt19937_64 rng(1);
    AttentionWeights<double> w("a", 8, rng);
    auto x = uniform_tensor<double>({2, 1, 8}, -1, 1, rng);
    auto out = multi_head_attention(x, x, w, 2);
    CHECK(out.weights.shape() == Shape{2, 2, 1, 1});
    for (double v : out.weights.data()) CHECK(v == 1.0);
}

TEST_CASE("zero query projection gives uniform weights") {
    std::mt19937_64 rng(2);
    AttentionWeights<double> w("a", 8, rng);
    for (auto& v : w.query.weight.mutable_data()) v = 0;
    for (auto& v : w.query.bias.mutable_data()) v = 0;
    auto x = uniform_tensor<double>({1, 6, 8}, -1, 1, rng);
    auto out = multi_head_attention(x, x, w, 4);
    for (double v : out.weights.data()) CHECK(std::abs(v - 1.0 / 6) <= 1e-15);
}

TEST_CASE("multi-head attention matches per-head loops") {
    std::mt19937_64 rng(3);
    const std::size_t dim = 8, heads = 2, dh = 4;
    for (auto [tq, tk] : std::vector<std::pair<std::size_t, std::size_t>>{{3, 3}, {3, 5}}) {
        AttentionWeights<double> w("a", dim, rng);
        for (auto* lin : {&w.query, &w.key, &w.value, &w.output})
            for (auto& v : lin->bias.mutable_data()) v = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
        auto q_src = uniform_tensor<double>({1, tq, dim}, -1, 1, rng);
        auto mem = uniform_tensor<double>({1, tk, dim}, -1, 1, rng);
        auto got = multi_head_attention(q_src, mem, w, heads);

        const auto q = affine(oracle::to_vec(q_src.data()), w.query, tq);
        const auto k = affine(oracle::to_vec(mem.data()), w.key, tk);
        const auto v = affine(oracle::to_vec(mem.data()), w.value, tk);
        oracle::Vec context(tq * dim), weights;
        for (std::size_t h = 0; h < heads; ++h) {
            const auto o = oracle::attention_head(slice_head(q, tq, dim, h, dh), slice_head(k, tk, dim, h, dh),
                                                  slice_head(v, tk, dim, h, dh), tq, tk, dh, &weights);
            for (std::size_t i = 0; i < tq; ++i)
                for (std::size_t d = 0; d < dh; ++d) context[i * dim + h * dh + d] = o[i * dh + d];
        }
        const auto want = affine(context, w.output, tq);
        for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(got.out.at(i) - want[i]) <= 1e-10);
        for (std::size_t i = 0; i < weights.size(); ++i) CHECK(std::abs(got.weights.at(i) - weights[i]) <= 1e-10);
    }
}

TEST_CASE("transformer shapes and attention maps") {
    std::mt19937_64 rng(4);
    Transformer<double> tf(small_config(true), rng);
    std::mt19937_64 drop(0);
    for (std::size_t b : {1, 4}) {
        auto out = tf.forward(uniform_tensor<double>({b, 10, 16}, -1, 1, rng), false, drop);
        CHECK(out.decoded.shape() == Shape{b, 10, 16});
        CHECK(out.attention.size() == 6);
        for (const auto& a : out.attention) CHECK(a.shape() == Shape{b, 4, 10, 10});
    }
    CHECK_THROWS_AS(tf.forward(TD::zeros({1, 10, 12}), false, drop), DimensionError);
}

TEST_CASE("without positional encoding the transformer is permutation equivariant") {
    std::mt19937_64 rng(5);
    Transformer<double> tf(small_config(false), rng);
    std::mt19937_64 drop(0);
    const std::size_t t = 7, d = 16;
    auto x = uniform_tensor<double>({1, t, d}, -1, 1, rng);
    const std::vector<std::size_t> perm{4, 2, 6, 0, 1, 5, 3};
    std::vector<double> xp(t * d);
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t c = 0; c < d; ++c) xp[i * d + c] = x.at(perm[i] * d + c);
    auto y = tf.forward(x, false, drop).decoded;
    auto yp = tf.forward(TD::from({1, t, d}, xp), false, drop).decoded;
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t c = 0; c < d; ++c) CHECK(std::abs(yp.at(i * d + c) - y.at(perm[i] * d + c)) <= 1e-12);

    // with the table added the same permutation changes the output
    Transformer<double> tf_pe(small_config(true), rng);
    auto z = tf_pe.forward(x, false, drop).decoded;
    auto zp = tf_pe.forward(TD::from({1, t, d}, xp), false, drop).decoded;
    double diff = 0;
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t c = 0; c < d; ++c) diff = std::max(diff, std::abs(zp.at(i * d + c) - z.at(perm[i] * d + c)));
    CHECK(diff > 1e-6);
}

TEST_CASE("inference is deterministic; training dropout follows its seed") {
    std::mt19937_64 rng(6);
    auto cfg = small_config(true);
    cfg.dropout = 0.1;
    Transformer<double> tf(cfg, rng);
    auto x = uniform_tensor<double>({2, 9, 16}, -1, 1, rng);
    std::mt19937_64 d1(11), d2(11), d3(99);
    CHECK(oracle::to_vec(tf.forward(x, false, d1).decoded.data()) == oracle::to_vec(tf.forward(x, false, d3).decoded.data()));
    const auto a = oracle::to_vec(tf.forward(x, true, d1).decoded.data());
    const auto b = oracle::to_vec(tf.forward(x, true, d2).decoded.data());
    CHECK(a == b);
}

TEST_CASE("regression head") {
    std::mt19937_64 rng(7);
    Linear<double> head("head", 16, 1, rng);
    auto x = uniform_tensor<double>({2, 5, 16}, -3, 3, rng);
    for (auto& v : head.weight.mutable_data()) v = 0;
    auto y = regression_head(x, head);
    CHECK(y.shape() == Shape{2, 5});
    for (double v : y.data()) CHECK(v == 0.5);
    head.bias.mutable_data()[0] = 20.0;
    const auto hi = regression_head(x, head);
    for (double v : hi.data()) CHECK(std::abs(v - 1.0) <= 1e-8);

    std::mt19937_64 rng2(8);
    Linear<double> rnd("head", 16, 1, rng2);
    const auto squashed = regression_head(uniform_tensor<double>({1, 50, 16}, -10, 10, rng2), rnd);
    for (double v : squashed.data()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}
