#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "drct/tensor.hpp"

namespace drct {

/// Define-by-run reverse-mode tape. Each op creates a node holding its value,
/// its parents, and a closure that routes the node's gradient to them.
template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated lazily, same shape as value
    bool requires_grad = false;
    std::string name;  // nonempty for parameters
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    Tensor<T>& ensure_grad() {
        if (grad.numel() != value.numel()) grad = Tensor<T>(value.shape());
        return grad;
    }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.vec().begin(), grad.vec().end(), T(0));
    }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
inline Var<T> make_var(Tensor<T> value, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

namespace autograd_detail {
inline thread_local int no_grad_depth = 0;
}

/// Ops record no tape while a guard is alive (inference mode).
struct NoGradGuard {
    NoGradGuard() { ++autograd_detail::no_grad_depth; }
    ~NoGradGuard() { --autograd_detail::no_grad_depth; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return autograd_detail::no_grad_depth == 0; }

/// Attach a result node; parents/backward are dropped in no-grad mode or when
/// no parent needs gradients.
template <typename T>
inline Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents,
                          std::function<void(Node<T>&)> backward_fn) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    if (grad_enabled()) {
        bool needs = false;
        for (const auto& p : parents)
            if (p && (p->requires_grad || p->backward_fn || !p->parents.empty()))
                needs = true;
        if (needs) {
            n->requires_grad = true;
            n->parents = std::move(parents);
            n->backward_fn = std::move(backward_fn);
        }
    }
    return n;
}

/// Reverse-topological backward from a scalar root (seed gradient 1).
template <typename T>
inline void backward(const Var<T>& root) {
    if (root->value.numel() != 1)
        throw std::invalid_argument("backward: root must be a scalar");
    // iterative post-order DFS
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node<T>* p = node->parents[idx++].get();
            if (p && !seen.count(p) && (p->backward_fn || p->requires_grad)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->ensure_grad()[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

}  // namespace drct
