#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "raune/tensor.hpp"

namespace raune {

// Reverse-mode automatic differentiation over Tensor<T>. Operations build a
// dynamic graph of VarNodes; backward() walks it once in reverse topological
// order. Graphs are per-call and freed when the result Var goes out of scope;
// only leaf parameters outlive a forward pass.

namespace detail {
inline thread_local int no_grad_depth = 0;
}

inline bool grad_enabled() { return detail::no_grad_depth == 0; }

// Scoped switch that disables graph construction (inference / metrics).
struct NoGradGuard {
    NoGradGuard() { ++detail::no_grad_depth; }
    ~NoGradGuard() { --detail::no_grad_depth; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <typename T>
struct VarNode {
    Tensor<T> value;
    Tensor<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<VarNode>> parents;
    // Consumes this node's grad and accumulates into the parents' grads.
    std::function<void(const Tensor<T>&)> backprop;

    void accumulate(const Tensor<T>& g) {
        if (grad.empty()) grad = Tensor<T>(value.shape);
        for (int64_t i = 0; i < g.numel(); ++i) grad[i] += g[i];
    }
    void zero_grad() {
        if (!grad.empty()) grad.fill(T(0));
    }
};

template <typename T>
using Var = std::shared_ptr<VarNode<T>>;

template <typename T>
Var<T> make_var(Tensor<T> value, bool requires_grad = false) {
    auto n = std::make_shared<VarNode<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

template <typename T>
Var<T> constant(Tensor<T> value) {
    return make_var(std::move(value), false);
}

// Wraps an op result. When grad tracking is off (or no parent needs a
// gradient) the node is a detached leaf and the closure is dropped.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents, std::function<void(const Tensor<T>&)> backprop) {
    bool track = grad_enabled();
    if (track) {
        track = false;
        for (const auto& p : parents)
            if (p && p->requires_grad) track = true;
    }
    auto n = std::make_shared<VarNode<T>>();
    n->value = std::move(value);
    if (track) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    return n;
}

// Reverse topological order from root (iterative DFS; graphs can be deep).
template <typename T>
std::vector<VarNode<T>*> topo_order(const Var<T>& root) {
    std::vector<VarNode<T>*> order;
    std::unordered_set<VarNode<T>*> seen;
    std::vector<std::pair<VarNode<T>*, size_t>> stack;
    stack.push_back({root.get(), 0});
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            VarNode<T>* p = node->parents[next++].get();
            if (p && p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;  // post-order: leaves first, root last
}

// Backpropagates d(root)/d(leaf) into every reachable node's grad.
// The root is seeded with ones (typically a scalar loss).
template <typename T>
void backward(const Var<T>& root) {
    if (!root || !root->requires_grad) return;
    auto order = topo_order(root);
    root->accumulate(Tensor<T>::full(root->value.shape, T(1)));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        VarNode<T>* n = *it;
        if (n->backprop && !n->grad.empty()) n->backprop(n->grad);
    }
}

}  // namespace raune
