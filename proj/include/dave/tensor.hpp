#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dave/common.hpp"

namespace dave {

template <typename T>
class Tensor;

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

/// Scoped guard that disables graph construction on the current thread.
/// Forwards executed under the guard produce plain value tensors, so
/// concurrent inference on shared read-only weights never touches a tape.
struct NoGradGuard {
    NoGradGuard() { depth()++; }
    ~NoGradGuard() { depth()--; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

    static int& depth() {
        static thread_local int d = 0;
        return d;
    }
};

inline bool grad_enabled() { return NoGradGuard::depth() == 0; }

/// Dense row-major N-d array with optional reverse-mode gradient tape
/// participation. float for training/inference, double for gradient checking.
template <typename T>
class Tensor : public std::enable_shared_from_this<Tensor<T>> {
public:
    std::vector<int> shape;
    std::vector<T> data;
    std::vector<T> grad;  // nonempty iff this node tracks gradients
    bool requires_grad = false;

    // reverse-mode graph; populated only while grad mode is enabled
    std::vector<TensorPtr<T>> parents;
    std::function<void()> backward_fn;

    Tensor() = default;

    static TensorPtr<T> create(std::vector<int> shape, bool requires_grad = false) {
        auto t = std::make_shared<Tensor<T>>();
        t->shape = std::move(shape);
        std::int64_t n = 1;
        for (int e : t->shape) {
            check_arg(e > 0, "tensor extents must be positive");
            n *= e;
        }
        t->data.assign(static_cast<std::size_t>(n), T(0));
        t->requires_grad = requires_grad;
        if (requires_grad) t->grad.assign(t->data.size(), T(0));
        return t;
    }

    static TensorPtr<T> from(std::vector<int> shape, std::vector<T> values, bool requires_grad = false) {
        auto t = create(std::move(shape), requires_grad);
        check_arg(values.size() == t->data.size(), "value count does not match shape");
        t->data = std::move(values);
        return t;
    }

    static TensorPtr<T> scalar(T v, bool requires_grad = false) {
        auto t = create({1}, requires_grad);
        t->data[0] = v;
        return t;
    }

    static TensorPtr<T> zeros(std::vector<int> shape, bool requires_grad = false) {
        return create(std::move(shape), requires_grad);
    }

    static TensorPtr<T> full(std::vector<int> shape, T v, bool requires_grad = false) {
        auto t = create(std::move(shape), requires_grad);
        std::fill(t->data.begin(), t->data.end(), v);
        return t;
    }

    /// Uniform fill in [lo, hi) from the supplied engine.
    static TensorPtr<T> uniform(std::vector<int> shape, T lo, T hi, std::mt19937_64& rng,
                                bool requires_grad = false) {
        auto t = create(std::move(shape), requires_grad);
        std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
        for (auto& x : t->data) x = static_cast<T>(dist(rng));
        return t;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int extent(int i) const { return shape[static_cast<std::size_t>(i)]; }

    T item() const {
        check_arg(data.size() == 1, "item() requires a scalar tensor");
        return data[0];
    }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }

    void zero_grad() {
        std::fill(grad.begin(), grad.end(), T(0));
    }

    bool has_grad() const { return grad.size() == data.size(); }

    bool all_finite() const {
        for (T x : data)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    bool tracked() const { return requires_grad || backward_fn; }

    /// Reverse-mode pass from a scalar root. Seeds d(root)/d(root) = 1 and
    /// accumulates into every reachable tracked tensor's grad buffer.
    void backward() {
        check_arg(data.size() == 1, "backward() requires a scalar root");
        ensure_grad();
        grad[0] += T(1);

        // iterative post-order topo sort
        std::vector<Tensor<T>*> order;
        std::unordered_set<Tensor<T>*> visited;
        std::vector<std::pair<Tensor<T>*, std::size_t>> stack;
        visited.insert(this);
        stack.emplace_back(this, 0);
        while (!stack.empty()) {
            auto& [node, idx] = stack.back();
            if (idx < node->parents.size()) {
                Tensor<T>* p = node->parents[idx++].get();
                if (p->tracked() && !visited.count(p)) {
                    visited.insert(p);
                    stack.emplace_back(p, 0);
                }
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            if ((*it)->backward_fn) (*it)->backward_fn();
        }
    }
};

namespace detail {

/// Allocates an op output and wires it into the graph when grad mode is on
/// and any parent is tracked. Caller installs backward_fn iff tracked().
template <typename T>
TensorPtr<T> op_output(std::vector<int> shape, std::initializer_list<TensorPtr<T>> inputs) {
    auto out = Tensor<T>::create(std::move(shape));
    if (grad_enabled()) {
        bool any = false;
        for (const auto& p : inputs)
            if (p && p->tracked()) any = true;
        if (any) {
            out->requires_grad = true;
            out->grad.assign(out->data.size(), T(0));
            for (const auto& p : inputs)
                if (p) out->parents.push_back(p);
        }
    }
    return out;
}

}  // namespace detail

}  // namespace dave
