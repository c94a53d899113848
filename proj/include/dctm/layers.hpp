#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "dctm/ops.hpp"
#include "dctm/random.hpp"

namespace dctm {

template <typename T>
Tensor<T> make_parameter(Tensor<T> init, std::string name) {
    init.set_name(std::move(name));
    init.set_requires_grad(true);
    return init;
}

// Xavier-uniform, or U(-1/sqrt(in), 1/sqrt(in)). The fan-in scale keeps the
// sigmoid head and fusion layers out of saturation early in training.
enum class LinearInit { Xavier, FanIn };

// y = x W + b over the last axis; W is stored [in, out].
template <typename T>
struct Linear {
    Tensor<T> weight;
    Tensor<T> bias;

    Linear() = default;
    Linear(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng, bool has_bias = true,
           LinearInit init = LinearInit::Xavier)
        : weight(make_parameter(init == LinearInit::Xavier
                                    ? xavier_uniform<T>({in, out}, in, out, rng)
                                    : uniform_tensor<T>({in, out}, T(-1) / std::sqrt(T(in)), T(1) / std::sqrt(T(in)), rng),
                                name + ".weight")) {
        if (has_bias) bias = make_parameter(Tensor<T>::zeros({out}), name + ".bias");
    }

    std::size_t in_features() const { return weight.dim(0); }
    std::size_t out_features() const { return weight.dim(1); }

    Tensor<T> operator()(const Tensor<T>& x) const {
        if (x.rank() < 2 || x.shape().back() != in_features()) {
            throw DimensionError("linear '" + weight.name() + "': input " + shape_str(x.shape()) +
                                 " does not end in " + std::to_string(in_features()));
        }
        Tensor<T> y = matmul(x, weight);
        return bias.defined() ? add(y, bias) : y;
    }

    void collect(std::vector<Tensor<T>>& out) const {
        out.push_back(weight);
        if (bias.defined()) out.push_back(bias);
    }
};

template <typename T>
struct LayerNorm {
    Tensor<T> gain;
    Tensor<T> bias;
    T eps = T(1e-5);

    LayerNorm() = default;
    LayerNorm(const std::string& name, std::size_t dim)
        : gain(make_parameter(Tensor<T>::full({dim}, T(1)), name + ".gain")),
          bias(make_parameter(Tensor<T>::zeros({dim}), name + ".bias")) {}

    Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gain, bias, eps); }

    void collect(std::vector<Tensor<T>>& out) const {
        out.push_back(gain);
        out.push_back(bias);
    }
};

} // namespace dctm
