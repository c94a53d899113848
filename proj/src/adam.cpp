#include "dctm/adam.hpp"

#include <cmath>

namespace dctm {

template <typename T>
AdamState<T> make_adam_state(const std::vector<Tensor<T>>& params, AdamOptions options) {
    AdamState<T> state;
    state.options = options;
    for (const auto& p : params) {
        state.m.emplace_back(p.numel(), T(0));
        state.v.emplace_back(p.numel(), T(0));
    }
    return state;
}

template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state) {
    if (params.size() != state.m.size()) {
        throw ContractError("adam_step: state tracks " + std::to_string(state.m.size()) + " tensors, got " +
                            std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].numel() != state.m[i].size()) {
            throw DimensionError("adam_step: moment buffers do not match parameter '" + params[i].name() + "'");
        }
        for (T g : params[i].grad()) {
            if (!std::isfinite(g)) {
                throw NumericalError("non-finite gradient in parameter '" + params[i].name() + "'");
            }
        }
    }
    state.step += 1;
    const auto& opt = state.options;
    const T b1 = static_cast<T>(opt.beta1);
    const T b2 = static_cast<T>(opt.beta2);
    const T correction1 = static_cast<T>(1.0 - std::pow(opt.beta1, static_cast<double>(state.step)));
    const T correction2 = static_cast<T>(1.0 - std::pow(opt.beta2, static_cast<double>(state.step)));
    const T lr = static_cast<T>(opt.lr);
    const T eps = static_cast<T>(opt.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto grad = params[i].grad();
        if (grad.empty()) continue;
        auto data = params[i].mutable_data();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < data.size(); ++j) {
            const T g = grad[j];
            m[j] = b1 * m[j] + (T(1) - b1) * g;
            v[j] = b2 * v[j] + (T(1) - b2) * g * g;
            const T m_hat = m[j] / correction1;
            const T v_hat = v[j] / correction2;
            data[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

template <typename T>
void zero_grads(std::vector<Tensor<T>>& params) {
    for (auto& p : params) p.zero_grad();
}

template AdamState<float> make_adam_state<float>(const std::vector<Tensor<float>>&, AdamOptions);
template AdamState<double> make_adam_state<double>(const std::vector<Tensor<double>>&, AdamOptions);
template void adam_step<float>(std::vector<Tensor<float>>&, AdamState<float>&);
template void adam_step<double>(std::vector<Tensor<double>>&, AdamState<double>&);
template void zero_grads<float>(std::vector<Tensor<float>>&);
template void zero_grads<double>(std::vector<Tensor<double>>&);

} // namespace dctm
