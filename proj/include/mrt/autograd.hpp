#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mrt/tensor.hpp"

namespace mrt {

// Graph recording switch. When disabled, ops produce constant results and
// keep no references to their inputs.
bool grad_enabled() noexcept;
void set_grad_enabled(bool enabled) noexcept;

class NoGradGuard {
public:
    NoGradGuard() : previous_(grad_enabled()) { set_grad_enabled(false); }
    ~NoGradGuard() { set_grad_enabled(previous_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    Tensor<T>& grad_buffer() {
        if (grad.shape() != value.shape() || grad.size() != value.size()) {
            grad = Tensor<T>(value.shape());
        }
        return grad;
    }
    bool has_grad() const { return grad.size() == value.size() && grad.shape() == value.shape(); }
};

/// Handle to a node of the differentiation graph. Copies share the node.
template <typename T>
class Var {
public:
    Var() = default;
    explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }
    explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Tensor<T>& value() const { return node_->value; }
    Tensor<T>& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    std::size_t size() const { return node_->value.size(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }

    bool has_grad() const { return node_->has_grad(); }
    // Zero tensor of the value's shape when nothing has been accumulated.
    Tensor<T> grad() const { return node_->has_grad() ? node_->grad : Tensor<T>(node_->value.shape()); }
    void zero_grad() { node_->grad = Tensor<T>(); }

    const std::shared_ptr<Node<T>>& node() const noexcept { return node_; }

private:
    std::shared_ptr<Node<T>> node_;
};

// Wraps a computed value as a graph node. The backward function receives the
// output node (whose grad is populated) and must accumulate into the grads of
// those parents that require them.
template <typename T>
Var<T> make_result(Tensor<T> value, const std::vector<Var<T>>& inputs,
                   std::function<void(Node<T>&)> backward_fn) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    if (grad_enabled()) {
        for (const auto& in : inputs) {
            if (in.requires_grad()) {
                node->requires_grad = true;
                break;
            }
        }
    }
    if (node->requires_grad) {
        for (const auto& in : inputs) {
            node->parents.push_back(in.node());
        }
        node->backward_fn = std::move(backward_fn);
    }
    return Var<T>(std::move(node));
}

// Reverse-mode sweep from `root`, seeded with `seed` (ones for a scalar root
// when omitted). Leaf grads accumulate across calls until zero_grad().
template <typename T>
void backward(const Var<T>& root, const Tensor<T>& seed) {
    if (!root.requires_grad()) {
        return;
    }
    if (seed.shape() != root.shape()) {
        throw DimensionError("backward seed shape " + shape_str(seed.shape()) +
                             " does not match root " + shape_str(root.shape()));
    }
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node().get(), 0}};
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) {
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root.node()->grad_buffer() += seed;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward_fn && n->has_grad()) {
            n->backward_fn(*n);
        }
    }
}

template <typename T>
void backward(const Var<T>& root) {
    backward(root, Tensor<T>(root.shape(), T{1}));
}

}  // namespace mrt
