#include "dctm/random.hpp"

#include <cmath>

namespace dctm {

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <typename T>
Tensor<T> uniform_tensor(Shape shape, T lo, T hi, std::mt19937_64& rng) {
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = lo + static_cast<T>(uniform01(rng)) * (hi - lo);
    return Tensor<T>::from(std::move(shape), std::move(v));
}

template <typename T>
Tensor<T> xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    const T a = static_cast<T>(std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
    return uniform_tensor<T>(std::move(shape), -a, a, rng);
}

template <typename T>
Tensor<T> normal_tensor(Shape shape, T stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(dist(rng));
    return Tensor<T>::from(std::move(shape), std::move(v));
}

template Tensor<float> uniform_tensor<float>(Shape, float, float, std::mt19937_64&);
template Tensor<double> uniform_tensor<double>(Shape, double, double, std::mt19937_64&);
template Tensor<float> xavier_uniform<float>(Shape, std::size_t, std::size_t, std::mt19937_64&);
template Tensor<double> xavier_uniform<double>(Shape, std::size_t, std::size_t, std::mt19937_64&);
template Tensor<float> normal_tensor<float>(Shape, float, std::mt19937_64&);
template Tensor<double> normal_tensor<double>(Shape, double, std::mt19937_64&);

} // namespace dctm
