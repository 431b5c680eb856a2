#include "grdsr/autograd.hpp"

#include <unordered_set>

#include "grdsr/errors.hpp"

namespace grdsr {

Tensor& Node::grad_buffer() {
    if (grad.empty()) grad = Tensor::zeros_like(value);
    return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

namespace {
thread_local bool no_grad_active = false;
}

NoGradGuard::NoGradGuard() : previous_(no_grad_active) { no_grad_active = true; }
NoGradGuard::~NoGradGuard() { no_grad_active = previous_; }
bool NoGradGuard::active() noexcept { return no_grad_active; }

Var Var::make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn) {
    Var out(std::move(value));
    if (no_grad_active) return out;
    bool any = false;
    for (auto& in : inputs) {
        any = any || in.requires_grad();
        out.node_->inputs.push_back(in.node_);
    }
    out.node_->requires_grad = any;
    if (any) out.node_->backward_fn = std::move(backward_fn);
    else out.node_->inputs.clear();
    return out;
}

void Var::zero_grad() {
    if (node_) node_->grad = Tensor();
}

void Var::backward() {
    Tensor seed(node_->value.shape(), 1.0f);
    backward(seed);
}

void Var::backward(const Tensor& seed) {
    if (!seed.same_shape(node_->value)) {
        throw ConfigError("backward seed shape " + shape_to_string(seed.shape()) + " does not match output " +
                          shape_to_string(node_->value.shape()));
    }
    // Iterative post-order DFS; the graph can be deep (dense blocks).
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->inputs.size()) {
            Node* child = n->inputs[idx++].get();
            if (child->requires_grad && visited.insert(child).second) stack.push_back({child, 0});
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    auto& g = node_->grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += seed[i];
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

} // namespace grdsr
