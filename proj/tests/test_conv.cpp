#include "doctest.h"

#include <cmath>

#include "dctm/conv.hpp"
#include "dctm/errors.hpp"
#include "dctm/ops.hpp"
#include "dctm/random.hpp"
#include "oracles.hpp"

using namespace dctm;
using TD = Tensor<double>;

TEST_CASE("identity kernel reproduces the input") {
    std::mt19937_64 rng(1);
    for (std::size_t l : {1, 2, 5}) {
        auto x = uniform_tensor<double>({1, 1, 20}, -1, 1, rng);
        auto y = dilated_conv1d(x, TD::from({1, 1, 3}, {0, 1, 0}), TD{}, l);
        CHECK(oracle::to_vec(y.data()) == oracle::to_vec(x.data()));
    }
}

TEST_CASE("dilated sum over padded input") {
    auto y = dilated_conv1d(TD::from({1, 1, 5}, {1, 2, 3, 4, 5}), TD::from({1, 1, 3}, {1, 1, 1}), TD{}, 2);
    CHECK(oracle::to_vec(y.data()) == std::vector<double>{4, 6, 9, 6, 8});
    CHECK(oracle::dilated_conv_padded({1, 2, 3, 4, 5}, {1, 1, 1}, 2) == std::vector<double>{4, 6, 9, 6, 8});
}

TEST_CASE("conv matches direct summation") {
    std::mt19937_64 rng(2);
    for (int rep = 0; rep < 30; ++rep) {
        const std::size_t b = 1 + rng() % 2, cin = 1 + rng() % 3, cout = 1 + rng() % 3;
        const std::size_t k = 2 * (rng() % 3) + 1, l = 1 + rng() % 5, t = 1 + rng() % 30;
        auto x = uniform_tensor<double>({b, cin, t}, -1, 1, rng);
        auto w = uniform_tensor<double>({cout, cin, k}, -1, 1, rng);
        auto bias = uniform_tensor<double>({cout}, -1, 1, rng);
        const auto got = oracle::to_vec(dilated_conv1d(x, w, bias, l).data());
        const auto want = oracle::conv1d(oracle::to_vec(x.data()), oracle::to_vec(w.data()), oracle::to_vec(bias.data()),
                                         b, cin, cout, k, l, t);
        for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-12);
    }
}

TEST_CASE("dilation 1 is traditional convolution with the reversed kernel") {
    std::mt19937_64 rng(4);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> x(12), w(5), wrev(5);
        for (auto& v : x) v = static_cast<double>(static_cast<int>(rng() % 11) - 5);
        for (auto& v : w) v = static_cast<double>(static_cast<int>(rng() % 7) - 3);
        std::reverse_copy(w.begin(), w.end(), wrev.begin());
        auto y = dilated_conv1d(TD::from({1, 1, 12}, x), TD::from({1, 1, 5}, w), TD{}, 1);
        CHECK(oracle::to_vec(y.data()) == oracle::true_conv(x, wrev, 1, 1, 5, 1, 12));
    }
}

TEST_CASE("receptive field arithmetic") {
    CHECK(receptive_field(make_stack_specs(4, {5, 5, 3}, {4, 4, 4}, {8, 8, 8})) == 41);
    CHECK(receptive_field(make_stack_specs(4, {3}, {1}, {8})) == 3);
    CHECK(receptive_field(make_stack_specs(4, {5, 5, 3}, {1, 1, 1}, {8, 8, 8})) == 11);
    CHECK_THROWS_AS(make_stack_specs(4, {4}, {1}, {8}), DimensionError);
    CHECK_THROWS_AS(make_stack_specs(4, {5, 5}, {1}, {8, 8}), ConfigError);
}

TEST_CASE("default stack keeps length and respects its receptive field") {
    std::mt19937_64 rng(6);
    ConvStack<double> stack("s", make_stack_specs(5, {5, 5, 3}, {4, 4, 4}, {16, 16, 16}), Activation::Relu, rng);
    auto x = uniform_tensor<double>({1, 5, 64}, -1, 1, rng);
    auto y = stack.forward(x);
    CHECK(y.shape() == Shape{1, 16, 64});

    auto xp = oracle::to_vec(x.data());
    for (std::size_t c = 0; c < 5; ++c) xp[c * 64] += 1.0;
    auto yp = stack.forward(TD::from({1, 5, 64}, xp));
    double at0 = 0, at60 = 0;
    for (std::size_t o = 0; o < 16; ++o) {
        at0 = std::max(at0, std::abs(yp.at(o * 64) - y.at(o * 64)));
        at60 = std::max(at60, std::abs(yp.at(o * 64 + 60) - y.at(o * 64 + 60)));
    }
    CHECK(at0 > 1e-9);
    CHECK(at60 == 0.0);
}

TEST_CASE("single identity layer without activation") {
    std::mt19937_64 rng(7);
    ConvStack<double> stack("s", make_stack_specs(1, {3}, {3}, {1}), Activation::None, rng);
    auto w = stack.weights()[0].mutable_data();
    w[0] = 0, w[1] = 1, w[2] = 0;
    for (auto& v : stack.biases()[0].mutable_data()) v = 0;
    auto x = uniform_tensor<double>({2, 1, 9}, -1, 1, rng);
    CHECK(oracle::to_vec(stack.forward(x).data()) == oracle::to_vec(x.data()));
}

TEST_CASE("conv shape errors") {
    CHECK_THROWS_AS(dilated_conv1d(TD::zeros({1, 2, 5}), TD::zeros({1, 3, 3}), TD{}, 1), DimensionError);
    CHECK_THROWS_AS(dilated_conv1d(TD::zeros({1, 2, 5}), TD::zeros({1, 2, 2}), TD{}, 1), DimensionError);
}
