#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "contracluster/array.hpp"
#include "contracluster/errors.hpp"

namespace contracluster {

namespace detail {
inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}
} // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

// Scoped inference mode: ops built while a guard is alive record no graph.
struct NoGradGuard {
    NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

template <typename T>
struct TensorNode {
    Array<T> value;
    Array<T> grad; // lazily sized; empty until first accumulation
    bool requires_grad = false;
    bool consumed = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    // Reads this->grad, accumulates into parents' grads. Cleared after backward.
    std::function<void(TensorNode&)> backprop;

    void ensure_grad() {
        if (grad.size() != value.size()) grad = Array<T>(value.shape());
    }
};

// Reverse-mode autodiff handle with shared ownership of its node. Copies are
// cheap and alias the same storage; ops are free functions that build the
// graph when grad mode is on and any input requires gradients.
template <typename T>
class Tensor {
public:
    using Node = TensorNode<T>;

    Tensor() = default;

    static Tensor constant(Array<T> value) {
        Tensor t;
        t.n_ = std::make_shared<Node>();
        t.n_->value = std::move(value);
        return t;
    }

    static Tensor parameter(Array<T> value) {
        Tensor t = constant(std::move(value));
        t.n_->requires_grad = true;
        return t;
    }

    static Tensor scalar(T v) { return constant(Array<T>::scalar(v)); }

    // Op result: records parents/backprop only when grad mode is on and some
    // parent participates in differentiation.
    static Tensor op(Array<T> value, std::vector<Tensor> parents,
                     std::function<void(Node&)> backprop) {
        Tensor t = constant(std::move(value));
        bool any = false;
        for (const auto& p : parents) any = any || p.requires_grad();
        if (grad_enabled() && any) {
            t.n_->requires_grad = true;
            t.n_->parents.reserve(parents.size());
            for (auto& p : parents) t.n_->parents.push_back(p.n_);
            t.n_->backprop = std::move(backprop);
        }
        return t;
    }

    bool defined() const { return static_cast<bool>(n_); }
    const Array<T>& value() const { return n_->value; }
    Array<T>& value() { return n_->value; }
    const Array<T>& grad() const { return n_->grad; }
    Array<T>& grad() { return n_->grad; }
    bool has_grad() const { return n_->grad.size() == n_->value.size(); }
    bool requires_grad() const { return n_ && n_->requires_grad; }
    const Shape& shape() const { return n_->value.shape(); }
    std::size_t size() const { return n_->value.size(); }
    std::shared_ptr<Node> node() const { return n_; }

    T item() const {
        if (size() != 1) throw usage_error("Tensor::item on non-scalar tensor");
        return n_->value[0];
    }

    void zero_grad() {
        if (n_ && n_->grad.size()) n_->grad.fill(T(0));
    }

    Tensor detach() const { return constant(n_->value); }

    // Reverse-mode sweep from a scalar. The recorded graph is consumed: a
    // second backward through the same nodes is a usage error.
    void backward() const {
        if (!n_) throw usage_error("backward on undefined tensor");
        if (n_->value.size() != 1) throw usage_error("backward requires a scalar loss");
        if (n_->consumed) throw usage_error("backward: graph already consumed");

        std::vector<Node*> order;
        topo_sort(order);

        n_->ensure_grad();
        n_->grad[0] += T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* node = *it;
            if (node->backprop) node->backprop(*node);
        }
        for (Node* node : order) {
            node->consumed = node->consumed || static_cast<bool>(node->backprop);
            node->backprop = nullptr;
            node->parents.clear();
        }
    }

    static void accumulate(Node& target, const Array<T>& g) {
        if (!target.requires_grad) return;
        target.ensure_grad();
        T* dst = target.grad.data();
        const T* src = g.data();
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
    }

private:
    void topo_sort(std::vector<Node*>& order) const {
        std::unordered_set<Node*> seen;
        std::vector<std::pair<Node*, std::size_t>> stack;
        stack.emplace_back(n_.get(), 0);
        seen.insert(n_.get());
        while (!stack.empty()) {
            Node* node = stack.back().first;
            std::size_t idx = stack.back().second;
            if (idx < node->parents.size()) {
                ++stack.back().second;
                Node* parent = node->parents[idx].get();
                if (parent->requires_grad && !seen.count(parent)) {
                    seen.insert(parent);
                    stack.emplace_back(parent, 0);
                }
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }
    }

    std::shared_ptr<Node> n_;
};

// A named trainable tensor; optimizers and checkpoints address parameters by
// "<layer_id>.<name>".
template <typename T>
struct Parameter {
    Tensor<T> tensor;
    std::string layer_id;
    std::string name;

    std::string full_name() const { return layer_id + "." + name; }
};

} // namespace contracluster
