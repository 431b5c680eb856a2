#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "grdsr/tensor.hpp"

namespace grdsr {

// Reverse-mode graph node. Each op produces one node holding its value, the
// inputs it depends on and a closure that pushes `grad` into the inputs.
struct Node {
    Tensor value;
    Tensor grad; // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward_fn;

    Tensor& grad_buffer(); // lazily zero-initialised, same shape as value
};

// Handle to a graph node. Cheap to copy; copies alias the same node.
class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);

    static Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn);

    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }

    bool has_grad() const { return node_ && !node_->grad.empty(); }
    const Tensor& grad() const { return node_->grad; }
    Tensor& grad_buffer() { return node_->grad_buffer(); }
    void zero_grad();

    // Seeds d(out)/d(out) with ones (or `seed` when given) and propagates
    // through every reachable node in reverse topological order.
    void backward();
    void backward(const Tensor& seed);

    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& node_ptr() const { return node_; }
    explicit operator bool() const { return static_cast<bool>(node_); }

private:
    std::shared_ptr<Node> node_;
};

// While alive, ops on this thread record no graph (inference only).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

    static bool active() noexcept;

private:
    bool previous_;
};

} // namespace grdsr
