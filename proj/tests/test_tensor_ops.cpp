#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "dctm/adam.hpp"
#include "dctm/checkpoint.hpp"
#include "dctm/errors.hpp"
#include "dctm/layers.hpp"
#include "dctm/ops.hpp"
#include "dctm/random.hpp"
#include "oracles.hpp"

using namespace dctm;
using TD = Tensor<double>;

namespace {

TD leaf(Shape s, std::vector<double> v) {
    TD t = TD::from(std::move(s), std::move(v));
    t.set_requires_grad(true);
    return t;
}

TD random_leaf(Shape s, std::mt19937_64& rng) {
    TD t = uniform_tensor<double>(std::move(s), -1.0, 1.0, rng);
    t.set_requires_grad(true);
    return t;
}

} // namespace

TEST_CASE("matmul worked examples") {
    auto eye = TD::from({2, 2}, {1, 0, 0, 1});
    auto m = TD::from({2, 2}, {1, 2, 3, 4});
    CHECK(oracle::to_vec(matmul(eye, m).data()) == std::vector<double>{1, 2, 3, 4});

    auto row = TD::from({1, 2}, {1, 2});
    auto col = TD::from({2, 1}, {3, 4});
    auto dot = matmul(row, col);
    CHECK(dot.shape() == Shape{1, 1});
    CHECK(dot.item() == 11.0);
}

TEST_CASE("matmul matches triple loop") {
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 10; ++rep) {
        auto a = uniform_tensor<double>({3, 4}, -1, 1, rng);
        auto b = uniform_tensor<double>({4, 5}, -1, 1, rng);
        const auto got = oracle::to_vec(matmul(a, b).data());
        const auto want = oracle::matmul(oracle::to_vec(a.data()), oracle::to_vec(b.data()), 3, 4, 5);
        for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-12);
    }
    // batched lhs against a shared rhs
    auto a = uniform_tensor<double>({2, 3, 4}, -1, 1, rng);
    auto b = uniform_tensor<double>({4, 2}, -1, 1, rng);
    const auto got = oracle::to_vec(matmul(a, b).data());
    const auto av = oracle::to_vec(a.data());
    for (std::size_t batch = 0; batch < 2; ++batch) {
        const oracle::Vec part(av.begin() + static_cast<long>(batch * 12), av.begin() + static_cast<long>((batch + 1) * 12));
        const auto want = oracle::matmul(part, oracle::to_vec(b.data()), 3, 4, 2);
        for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(got[batch * 6 + i] - want[i]) <= 1e-12);
    }
    CHECK_THROWS_AS(matmul(TD::zeros({2, 3}), TD::zeros({2, 3})), DimensionError);
}

TEST_CASE("elementwise worked examples") {
    CHECK(tanh(TD::scalar(0.0)).item() == 0.0);
    CHECK(sigmoid(TD::scalar(0.0)).item() == 0.5);
    auto p = mul(TD::from({3}, {1, 2, 3}), TD::from({3}, {4, 5, 6}));
    CHECK(oracle::to_vec(p.data()) == std::vector<double>{4, 10, 18});
    auto big = sigmoid(TD::from({2}, {-800, 800}));
    CHECK(std::isfinite(big.at(0)));
    CHECK(big.at(1) == 1.0);
    CHECK_THROWS_AS(add(TD::zeros({2, 3}), TD::zeros({2, 2})), DimensionError);
}

TEST_CASE("softmax") {
    auto u = softmax(TD::from({3}, {0, 0, 0}), 0);
    for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));

    auto ln = softmax(TD::from({3}, {std::log(1.0), std::log(2.0), std::log(3.0)}), 0);
    CHECK(ln.at(0) == doctest::Approx(1.0 / 6).epsilon(1e-14));
    CHECK(ln.at(1) == doctest::Approx(2.0 / 6).epsilon(1e-14));
    CHECK(ln.at(2) == doctest::Approx(3.0 / 6).epsilon(1e-14));

    std::mt19937_64 rng(5);
    auto x = uniform_tensor<double>({2, 5}, -3, 3, rng);
    auto a = softmax(x, 1);
    auto b = softmax(add_scalar(x, 7.25), 1);
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(std::abs(a.at(i) - b.at(i)) <= 1e-15);
    const auto xv = oracle::to_vec(x.data());
    for (std::size_t r = 0; r < 2; ++r) {
        const auto row = xv.begin() + static_cast<long>(r * 5);
        const auto want = oracle::softmax(oracle::Vec(row, row + 5));
        for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(a.at(r * 5 + j) - want[j]) <= 1e-15);
    }
}

TEST_CASE("layer_norm") {
    const auto ones = TD::full({3}, 1.0), zeros = TD::zeros({3});
    auto c = layer_norm(TD::from({1, 3}, {5, 5, 5}), ones, zeros);
    for (double v : c.data()) CHECK(v == 0.0);

    auto y = layer_norm(TD::from({1, 3}, {1, 2, 3}), ones, zeros);
    CHECK(y.at(0) == doctest::Approx(-1.2247).epsilon(1e-4));
    CHECK(y.at(1) == doctest::Approx(0.0));
    CHECK(y.at(2) == doctest::Approx(1.2247).epsilon(1e-4));
    const auto want = oracle::layer_norm({1, 2, 3}, 1e-5);
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(y.at(i) - want[i]) <= 1e-12);

    auto bias = TD::from({3}, {0.5, -1, 2});
    auto g0 = layer_norm(TD::from({2, 3}, {1, 7, -2, 4, 4, 9}), TD::zeros({3}), bias);
    for (std::size_t i = 0; i < 6; ++i) CHECK(g0.at(i) == bias.at(i % 3));
}

TEST_CASE("autodiff basics") {
    auto w = leaf({2}, {1, 2});
    backward(sum(mul(w, w)));
    CHECK(oracle::to_vec(w.grad()) == std::vector<double>{2, 4});

    auto d = w.detach();
    CHECK_FALSE(d.requires_grad());
    CHECK_FALSE(d.has_grad());

    CHECK_THROWS_AS(backward(mul(w, w)), ContractError);  // non-scalar root
}

TEST_CASE("composite graph gradients match finite differences") {
    std::mt19937_64 rng(17);
    for (int rep = 0; rep < 5; ++rep) {
        auto a = random_leaf({2, 3, 4}, rng);
        auto b = random_leaf({4, 5}, rng);
        auto g = random_leaf({5}, rng);
        auto bias = random_leaf({5}, rng);
        auto r = uniform_tensor<double>({2, 3, 5}, -1, 1, rng);
        auto loss = [=] {
            auto h = layer_norm(tanh(matmul(a, b)), g, bias);
            auto s = softmax(permute(h, {0, 2, 1}), 2);
            return mean(mul(permute(s, {0, 2, 1}), r));
        };
        CHECK(oracle::gradient_rel_error(loss, {a, b, g, bias}) <= 1e-4);
    }
}

TEST_CASE("adam") {
    SUBCASE("zero gradient leaves parameters unchanged") {
        auto p = leaf({3}, {1, -2, 3});
        std::vector<TD> params{p};
        auto st = make_adam_state(params, AdamOptions{0.1});
        p.mutable_grad();
        adam_step(params, st);
        CHECK(st.step == 1);
        CHECK(oracle::to_vec(p.data()) == std::vector<double>{1, -2, 3});
    }
    SUBCASE("single step from hand-rolled moments") {
        auto p = leaf({1}, {0});
        std::vector<TD> params{p};
        auto st = make_adam_state(params, AdamOptions{0.1});
        p.mutable_grad()[0] = 1.0;
        adam_step(params, st);
        CHECK(p.at(0) == doctest::Approx(-0.1 / (1 + 1e-8)).epsilon(1e-15));
    }
    SUBCASE("non-finite gradient names the tensor and changes nothing") {
        auto p = leaf({2}, {1, 2});
        p.set_name("layer.weight");
        std::vector<TD> params{p};
        auto st = make_adam_state(params, AdamOptions{0.1});
        p.mutable_grad()[1] = NAN;
        CHECK_THROWS_WITH_AS(adam_step(params, st), doctest::Contains("layer.weight"), NumericalError);
        CHECK(oracle::to_vec(p.data()) == std::vector<double>{1, 2});
    }
    SUBCASE("identical runs are bit-identical") {
        auto run = [] {
            std::mt19937_64 rng(9);
            auto w = random_leaf({4, 3}, rng);
            auto x = uniform_tensor<double>({5, 4}, -1, 1, rng);
            std::vector<TD> params{w};
            auto st = make_adam_state(params, AdamOptions{0.01});
            for (int i = 0; i < 20; ++i) {
                backward(mean(tanh(matmul(x, w))));
                adam_step(params, st);
                zero_grads(params);
            }
            return oracle::to_vec(w.data());
        };
        CHECK(run() == run());
    }
}

TEST_CASE("checkpoint round trip is bit exact") {
    std::mt19937_64 rng(21);
    auto a = make_parameter(uniform_tensor<float>({3, 4}, -1, 1, rng), "a.weight");
    auto b = make_parameter(uniform_tensor<float>({4}, -1, 1, rng), "a.bias");
    const auto path = std::filesystem::temp_directory_path() / "dctm_ckpt_test.dctm";
    save_parameters<float>(path, {a, b});

    auto a2 = make_parameter(Tensor<float>::zeros({3, 4}), "a.weight");
    auto b2 = make_parameter(Tensor<float>::zeros({4}), "a.bias");
    std::vector<Tensor<float>> restored{a2, b2};
    load_parameters(path, restored);
    CHECK(std::equal(a.data().begin(), a.data().end(), a2.data().begin()));
    CHECK(std::equal(b.data().begin(), b.data().end(), b2.data().begin()));

    auto wrong = make_parameter(Tensor<float>::zeros({4, 3}), "a.weight");
    std::vector<Tensor<float>> bad{wrong, b2};
    CHECK_THROWS_WITH(load_parameters(path, bad), doctest::Contains("a.weight"));
    auto missing = make_parameter(Tensor<float>::zeros({2}), "c.bias");
    std::vector<Tensor<float>> bad2{a2, b2, missing};
    CHECK_THROWS_WITH(load_parameters(path, bad2), doctest::Contains("c.bias"));
    std::filesystem::remove(path);
}
