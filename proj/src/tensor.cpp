#include "dctm/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace dctm {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
    return full(std::move(shape), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
    auto node = std::make_shared<TensorNode<T>>();
    node->data.assign(shape_numel(shape), value);
    node->shape = std::move(shape);
    return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values) {
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("tensor shape " + shape_str(shape) + " does not hold " +
                             std::to_string(values.size()) + " values");
    }
    auto node = std::make_shared<TensorNode<T>>();
    node->shape = std::move(shape);
    node->data.assign(values.begin(), values.end());
    return Tensor(std::move(node));
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) {
        throw ContractError("item() on tensor of shape " + shape_str(shape()));
    }
    return node_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool flag) {
    node_->requires_grad = flag;
    if (flag) {
        node_->ensure_grad();
    } else {
        node_->grad.clear();
    }
    return *this;
}

template <typename T>
void Tensor<T>::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    auto node = std::make_shared<TensorNode<T>>();
    node->shape = node_->shape;
    node->data = node_->data;
    node->name = node_->name;
    return Tensor(std::move(node));
}

template <typename T>
std::vector<TensorNode<T>*> build_tape(const Tensor<T>& root) {
    std::vector<TensorNode<T>*> order;
    if (!root.defined() || !root.requires_grad()) return order;
    std::unordered_set<TensorNode<T>*> visited;
    // Iterative post-order DFS; (node, next input index) frames.
    std::vector<std::pair<TensorNode<T>*, std::size_t>> stack;
    stack.emplace_back(root.node(), 0);
    visited.insert(root.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            TensorNode<T>* child = node->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) {
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

template <typename T>
void backward(const Tensor<T>& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ContractError("backward() requires a scalar loss, got shape " +
                            (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    }
    auto tape = build_tape(loss);
    if (tape.empty()) {
        throw ContractError("backward() on a loss that does not depend on any trainable tensor");
    }
    loss.node()->ensure_grad()[0] += T(1);
    for (auto it = tape.rbegin(); it != tape.rend(); ++it) {
        TensorNode<T>* node = *it;
        if (!node->backward || node->grad.empty()) continue;
        node->backward(*node);
        // Interior gradients are consumed exactly once per sweep.
        if (!node->inputs.empty()) {
            node->grad.clear();
            node->grad.shrink_to_fit();
        }
    }
}

template <typename T>
Tensor<T> make_result(Shape shape, Buffer<T> data,
                      std::vector<std::shared_ptr<TensorNode<T>>> inputs,
                      std::function<void(TensorNode<T>&)> backward_rule) {
    auto node = std::make_shared<TensorNode<T>>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    if (grad_enabled()) {
        bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const auto& in) { return in && in->requires_grad; });
        if (any) {
            node->requires_grad = true;
            node->inputs = std::move(inputs);
            node->backward = std::move(backward_rule);
        }
    }
    return Tensor<T>(std::move(node));
}

#define DCTM_INSTANTIATE_TENSOR(T)                                                          \
    template class Tensor<T>;                                                               \
    template std::vector<TensorNode<T>*> build_tape<T>(const Tensor<T>&);                   \
    template void backward<T>(const Tensor<T>&);                                            \
    template Tensor<T> make_result<T>(Shape, Buffer<T>,                                \
                                      std::vector<std::shared_ptr<TensorNode<T>>>,          \
                                      std::function<void(TensorNode<T>&)>);

DCTM_INSTANTIATE_TENSOR(float)
DCTM_INSTANTIATE_TENSOR(double)

} // namespace dctm
