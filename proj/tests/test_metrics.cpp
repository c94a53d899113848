#include "doctest.h"

#include <cmath>
#include <random>

#include "dctm/errors.hpp"
#include "dctm/metrics.hpp"
#include "dctm/ops.hpp"
#include "dctm/random.hpp"
#include "oracles.hpp"

using namespace dctm;
using TD = Tensor<double>;

namespace {

ModalityStream stream_from(const std::vector<double>& values, std::size_t channels) {
    ModalityStream s;
    s.channels = channels;
    s.frames = values.size() / channels;
    s.features = values;
    s.valid.assign(s.frames, 1);
    for (std::size_t c = 0; c < channels; ++c) s.feature_names.push_back("f" + std::to_string(c));
    return s;
}

} // namespace

TEST_CASE("ccc worked examples") {
    const std::vector<double> x{1, 2, 3}, rev{3, 2, 1};
    CHECK(ccc(x, x).ccc == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(ccc(x, rev).ccc == doctest::Approx(-1.0).epsilon(1e-15));
    // perfectly correlated but shifted: 2*(2/3) / (2/3 + 2/3 + 1) = 4/7
    const std::vector<double> shifted{2, 3, 4};
    CHECK(ccc(x, shifted).ccc == doctest::Approx(4.0 / 7).epsilon(1e-15));
    CHECK(ccc(x, shifted).pearson == doctest::Approx(1.0).epsilon(1e-15));

    const auto r = ccc(x, std::vector<double>{1, 2, 4});
    const auto o = oracle::ccc(x, {1, 2, 4});
    CHECK(std::abs(r.ccc - o.ccc) <= 1e-12);
    CHECK(r.var_x == doctest::Approx(2.0 / 3));
}

TEST_CASE("ccc matches the two-pass oracle") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0, 1);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t len = 2 + rng() % 300;
        std::vector<double> x(len), y(len);
        const double rho = std::uniform_real_distribution<double>(-1, 1)(rng);
        for (std::size_t i = 0; i < len; ++i) {
            x[i] = n(rng) * 3 + 1;
            y[i] = rho * x[i] + n(rng) + 0.5;
        }
        const double got = ccc(x, y).ccc;
        CHECK(std::abs(got - oracle::ccc(x, y).ccc) <= 1e-10);
        CHECK(std::abs(got - ccc(y, x).ccc) <= 1e-12);
        CHECK(got >= -1.0);
        CHECK(got <= 1.0);
    }
}

TEST_CASE("ccc masking and degenerate inputs") {
    const std::vector<double> x{1, 2, 100, 3}, y{1, 2, -50, 3};
    const std::vector<std::uint8_t> mask{1, 1, 0, 1};
    CHECK(ccc(x, y, mask).ccc == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(ccc(x, y, mask).n == 3);

    const auto flat = ccc(std::vector<double>{0.5, 0.5, 0.5}, std::vector<double>{0.1, 0.7, 0.4});
    CHECK(flat.degenerate);
    CHECK(flat.ccc == 0.0);

    CHECK_THROWS_AS(ccc(std::vector<double>{1.0}, std::vector<double>{1.0}), ContractError);
    CHECK_THROWS_AS(ccc(x, y, std::vector<std::uint8_t>{1, 0, 0, 0}), ContractError);
    CHECK_THROWS_AS(ccc(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST_CASE("ccc loss values") {
    auto a = TD::from({1, 3}, {1, 2, 3});
    CHECK(ccc_loss(a, a).item() == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(ccc_loss(a, TD::from({1, 3}, {3, 2, 1})).item() == doctest::Approx(2.0).epsilon(1e-15));
    // mean over windows
    auto two = TD::from({2, 3}, {1, 2, 3, 1, 2, 3});
    CHECK(ccc_loss(two, TD::from({2, 3}, {1, 2, 3, 3, 2, 1})).item() == doctest::Approx(1.0).epsilon(1e-15));
    // a window with only one unmasked frame is skipped
    const std::vector<std::uint8_t> mask{1, 1, 1, 1, 0, 0};
    CHECK(ccc_loss(two, TD::from({2, 3}, {1, 2, 3, 3, 2, 1}), mask).item() == doctest::Approx(0.0).epsilon(1e-15));
    CHECK_THROWS_AS(ccc_loss(two, two, std::vector<std::uint8_t>{1, 0, 0, 1, 0, 0}), ContractError);
}

TEST_CASE("ccc loss gradient matches finite differences") {
    std::mt19937_64 rng(2);
    for (int rep = 0; rep < 5; ++rep) {
        auto pred = uniform_tensor<double>({2, 8}, 0.1, 0.9, rng);
        pred.set_requires_grad(true);
        auto target = uniform_tensor<double>({2, 8}, 0, 1, rng);
        std::vector<std::uint8_t> mask(16, 1);
        mask[3] = mask[12] = 0;
        CHECK(oracle::gradient_rel_error([&] { return ccc_loss(pred, target, mask); }, {pred}) <= 1e-4);
    }
}

TEST_CASE("feature magnitude agreement") {
    SUBCASE("magnitude equal to the label") {
        std::vector<double> labels{0.1, 0.5, 0.3, 0.9, 0.7};
        auto s = stream_from(labels, 1);
        CHECK(magnitude_ccc(s, labels).ccc == doctest::Approx(1.0).epsilon(1e-15));
        // two channels with norm = label: (0.6 l, 0.8 l)
        std::vector<double> two;
        for (double l : labels) two.insert(two.end(), {0.6 * l, 0.8 * l});
        CHECK(std::abs(magnitude_ccc(stream_from(two, 2), labels).ccc - 1.0) <= 1e-9);
    }
    SUBCASE("independent noise is near zero") {
        for (std::uint64_t seed : {1, 2, 3}) {
            std::mt19937_64 rng(seed);
            std::normal_distribution<double> n(0, 1);
            std::uniform_real_distribution<double> u(0, 1);
            std::vector<double> feats(10000 * 4), labels(10000);
            for (auto& v : feats) v = n(rng);
            for (auto& v : labels) v = u(rng);
            CHECK(std::abs(magnitude_ccc(stream_from(feats, 4), labels).ccc) < 0.05);
        }
    }
    SUBCASE("invalid frames are skipped") {
        std::vector<double> labels{0.1, 0.5, 0.3, 0.9};
        auto s = stream_from({0.1, 0.5, 7.0, 0.9}, 1);
        s.valid[2] = 0;
        CHECK(magnitude_ccc(s, labels).ccc == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(magnitude_ccc(s, labels).n == 3);
    }
    SUBCASE("frame magnitudes") {
        auto m = frame_magnitudes(stream_from({3, 4, 0, 0}, 2));
        CHECK(m == std::vector<double>{5.0, 0.0});
    }
}

TEST_CASE("error metrics") {
    const std::vector<double> a{1, 2, 3}, b{2, 2, 5};
    CHECK(mean_squared_error(a, b) == doctest::Approx(5.0 / 3));
    CHECK(mean_absolute_error(a, b) == doctest::Approx(1.0));
}
