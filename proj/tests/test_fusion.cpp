#include "doctest.h"

#include <cmath>

#include "dctm/errors.hpp"
#include "dctm/fusion.hpp"
#include "dctm/ops.hpp"
#include "dctm/random.hpp"
#include "oracles.hpp"

using namespace dctm;
using TD = Tensor<double>;

namespace {

void fill(TD t, double v) {
    for (auto& x : t.mutable_data()) x = v;
}

// Gate weights zero, gate bias b: z = sigmoid(b) everywhere.
void pin_gate(GmuUnit<double>& u, double b) {
    fill(u.gate.weight, 0.0);
    fill(u.gate.bias, b);
}

// tanh(x W + b) by hand, x [N, in], W [in, out]
oracle::Vec dense_tanh(const oracle::Vec& x, const Linear<double>& lin, std::size_t n) {
    const std::size_t in = lin.in_features(), out = lin.out_features();
    auto y = oracle::matmul(x, oracle::to_vec(lin.weight.data()), n, in, out);
    const auto b = oracle::to_vec(lin.bias.data());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < out; ++j) y[i * out + j] = std::tanh(y[i * out + j] + b[j]);
    return y;
}

} // namespace

TEST_CASE("concat fusion widens then projects") {
    std::mt19937_64 rng(1);
    Fusion<double> f(FusionKind::SelfAttentionConcat, {Modality::Head, Modality::Pose, Modality::Voice}, {64, 64, 64},
                     128, rng);
    CHECK(f.projection().in_features() == 192);
    CHECK(f.projection().out_features() == 128);

    std::vector<TD> feats;
    for (int m = 0; m < 3; ++m) feats.push_back(uniform_tensor<double>({2, 64, 10}, -1, 1, rng));
    auto out = f.forward(feats);
    CHECK(out.tokens.shape() == Shape{2, 10, 128});
    CHECK(out.gates.empty());

    std::vector<TD> zeros(3, TD::zeros({2, 64, 10}));
    fill(f.projection().bias, 0.0);
    const auto zero_out = f.forward(zeros).tokens;
    for (double v : zero_out.data()) CHECK(v == 0.0);
}

TEST_CASE("concat fusion commutes with frame permutation") {
    std::mt19937_64 rng(2);
    Fusion<double> f(FusionKind::SelfAttentionConcat, {Modality::Head, Modality::Voice}, {3, 2}, 4, rng);
    auto a = uniform_tensor<double>({1, 3, 5}, -1, 1, rng);
    auto b = uniform_tensor<double>({1, 2, 5}, -1, 1, rng);
    const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    auto permute_frames = [&](const TD& x) {
        const std::size_t c = x.dim(1), t = x.dim(2);
        std::vector<double> v(c * t);
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < t; ++i) v[ch * t + i] = x.at(ch * t + perm[i]);
        return TD::from({1, c, t}, v);
    };
    auto y = f.forward({a, b}).tokens;
    auto yp = f.forward({permute_frames(a), permute_frames(b)}).tokens;
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t d = 0; d < 4; ++d) CHECK(yp.at(i * 4 + d) == y.at(perm[i] * 4 + d));
}

TEST_CASE("saturated gate passes the first branch") {
    std::mt19937_64 rng(3);
    GmuUnit<double> u("g", "head", "pose", 3, 4, 5, rng);
    pin_gate(u, 20.0);
    auto x1 = uniform_tensor<double>({2, 6, 3}, -1, 1, rng);
    auto x2 = uniform_tensor<double>({2, 6, 4}, -1, 1, rng);
    auto got = gmu_fuse(x1, x2, u).fused;
    const auto want = dense_tanh(oracle::to_vec(x1.data()), u.transform1, 12);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(got.at(i) - want[i]) <= 1e-8);

    // changing x2 barely matters
    auto got2 = gmu_fuse(x1, uniform_tensor<double>({2, 6, 4}, -5, 5, rng), u).fused;
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(got2.at(i) - want[i]) <= 1e-8);
}

TEST_CASE("identical branches give identical output for any gate") {
    std::mt19937_64 rng(4);
    GmuUnit<double> u("g", "a", "b", 3, 3, 4, rng);
    for (std::size_t i = 0; i < u.transform1.weight.numel(); ++i) u.transform2.weight.mutable_data()[i] = u.transform1.weight.at(i);
    for (std::size_t i = 0; i < 4; ++i) u.transform1.bias.mutable_data()[i] = u.transform2.bias.mutable_data()[i] = 0.1 * double(i);
    auto x = uniform_tensor<double>({1, 7, 3}, -1, 1, rng);
    auto got = gmu_fuse(x, x, u).fused;
    const auto want = dense_tanh(oracle::to_vec(x.data()), u.transform1, 7);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(got.at(i) - want[i]) <= 1e-12);
}

TEST_CASE("scalar gmu: opposite weights at zero bias cancel") {
    std::mt19937_64 rng(5);
    GmuUnit<double> u("g", "a", "b", 1, 1, 1, rng);
    u.transform1.weight.mutable_data()[0] = 1.0;
    u.transform2.weight.mutable_data()[0] = -1.0;
    fill(u.transform1.bias, 0.0);
    fill(u.transform2.bias, 0.0);
    pin_gate(u, 0.0);
    auto x = TD::from({1, 3, 1}, {0.3, -0.7, 1.1});
    const auto fused = gmu_fuse(x, x, u).fused;
    for (double v : fused.data()) CHECK(std::abs(v) <= 1e-15);
}

TEST_CASE("hierarchical fusion") {
    std::mt19937_64 rng(6);
    Fusion<double> f(FusionKind::GatedMultimodal, {Modality::Head, Modality::Pose, Modality::Voice}, {4, 3, 2}, 6, rng);
    REQUIRE(f.units().size() == 2);

    SUBCASE("zero inputs and zero biases give zero") {
        for (auto& u : f.units()) {
            fill(u.transform1.bias, 0.0);
            fill(u.transform2.bias, 0.0);
        }
        auto out = f.forward({TD::zeros({1, 4, 5}), TD::zeros({1, 3, 5}), TD::zeros({1, 2, 5})});
        for (double v : out.tokens.data()) CHECK(v == 0.0);
        REQUIRE(out.gates.size() == 2);
        for (double z : out.gates[0].data()) CHECK(z == 0.5);
    }
    SUBCASE("both gates saturated to the first input reduce to a tanh chain of the head stream") {
        pin_gate(f.units()[0], 20.0);
        pin_gate(f.units()[1], 20.0);
        auto head = uniform_tensor<double>({2, 4, 5}, -1, 1, rng);
        auto pose = uniform_tensor<double>({2, 3, 5}, -1, 1, rng);
        auto voice = uniform_tensor<double>({2, 2, 5}, -1, 1, rng);
        auto got = f.forward({head, pose, voice}).tokens;
        CHECK(got.shape() == Shape{2, 5, 6});
        const auto tokens = oracle::to_vec(permute(head, {0, 2, 1}).data());
        const auto inner = dense_tanh(tokens, f.units()[0].transform1, 10);
        const auto want = dense_tanh(inner, f.units()[1].transform1, 10);
        for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(got.at(i) - want[i]) <= 1e-8);
    }
}

TEST_CASE("gmu output shape at model width") {
    std::mt19937_64 rng(7);
    Fusion<double> f(FusionKind::GatedMultimodal, {Modality::Head, Modality::Pose, Modality::Voice}, {64, 64, 64}, 128,
                     rng);
    auto out = f.forward({uniform_tensor<double>({3, 64, 8}, -1, 1, rng), uniform_tensor<double>({3, 64, 8}, -1, 1, rng),
                          uniform_tensor<double>({3, 64, 8}, -1, 1, rng)});
    CHECK(out.tokens.shape() == Shape{3, 8, 128});
    for (double v : out.tokens.data()) CHECK(std::abs(v) <= 1.0);
}

TEST_CASE("fusion input errors") {
    std::mt19937_64 rng(8);
    Fusion<double> sa(FusionKind::SelfAttentionConcat, {Modality::Head, Modality::Pose}, {2, 2}, 4, rng);
    CHECK_THROWS_AS(sa.forward({TD::zeros({1, 2, 5}), TD::zeros({1, 2, 6})}), AlignmentError);
    CHECK_THROWS_WITH(sa.forward({TD::zeros({1, 2, 5}), TD::zeros({1, 3, 5})}), doctest::Contains("pose"));

    Fusion<double> gmu(FusionKind::GatedMultimodal, {Modality::Head, Modality::Pose}, {2, 2}, 4, rng);
    CHECK_THROWS_AS(gmu.forward({TD::zeros({1, 2, 5}), TD::zeros({1, 2, 6})}), AlignmentError);
    CHECK_THROWS_WITH(gmu.forward({TD::zeros({1, 3, 5}), TD::zeros({1, 2, 5})}), doctest::Contains("head"));
    CHECK_THROWS_AS(gmu.forward({TD::zeros({1, 2, 5})}), ContractError);
}
