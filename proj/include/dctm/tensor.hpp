#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dctm/errors.hpp"

namespace dctm {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Every buffer starts on the same SIMD boundary, so vectorized loops peel
// identically from run to run and results do not depend on heap addresses.
template <typename T>
using Buffer = std::vector<T, Eigen::aligned_allocator<T>>;

template <typename T>
struct TensorNode {
    Shape shape;
    Buffer<T> data;
    // Empty until the node first receives a gradient; leaves marked
    // requires_grad get a zero buffer immediately.
    Buffer<T> grad;
    bool requires_grad = false;
    std::string name;
    std::vector<std::shared_ptr<TensorNode>> inputs;
    // Reads this node's grad and accumulates into the inputs' grads.
    std::function<void(TensorNode&)> backward;

    Buffer<T>& ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), T(0));
        return grad;
    }
};

/// Dense row-major tensor handle. Copies share the underlying node, so a
/// parameter updated in place is visible through every handle.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode<T>> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, T value);
    static Tensor from(Shape shape, std::vector<T> values);
    static Tensor scalar(T value) { return from({1}, {value}); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t numel() const { return node_->data.size(); }

    std::span<const T> data() const { return node_->data; }
    // Direct write access; bypasses the graph (optimizer updates, test probes).
    std::span<T> mutable_data() { return node_->data; }
    T item() const;
    T at(std::size_t flat_index) const { return node_->data.at(flat_index); }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool flag);
    bool has_grad() const { return node_->requires_grad && !node_->grad.empty(); }
    std::span<const T> grad() const { return node_->grad; }
    std::span<T> mutable_grad() { return node_->ensure_grad(); }
    void zero_grad();

    const std::string& name() const { return node_->name; }
    Tensor& set_name(std::string name) {
        node_->name = std::move(name);
        return *this;
    }

    // New leaf sharing no history and no gradient.
    Tensor detach() const;
    Tensor clone() const { return detach(); }

    TensorNode<T>* node() const { return node_.get(); }
    const std::shared_ptr<TensorNode<T>>& node_ptr() const { return node_; }

private:
    std::shared_ptr<TensorNode<T>> node_;
};

// Graph recording is on by default; a guard disables it for the current
// thread (evaluation, finite-difference probes).
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Topologically ordered list of the nodes reachable from a root that
/// participate in differentiation. Inputs precede the ops that consume them.
template <typename T>
std::vector<TensorNode<T>*> build_tape(const Tensor<T>& root);

/// Reverse-mode sweep from a scalar loss. Gradients accumulate into existing
/// buffers; the caller zeroes parameter grads between steps.
template <typename T>
void backward(const Tensor<T>& loss);

// Creates an op output node. When recording is enabled and any input
// requires grad, the node keeps its inputs and backward rule.
template <typename T>
Tensor<T> make_result(Shape shape, Buffer<T> data,
                      std::vector<std::shared_ptr<TensorNode<T>>> inputs,
                      std::function<void(TensorNode<T>&)> backward_rule);

} // namespace dctm
