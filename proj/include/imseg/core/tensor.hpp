#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "imseg/core/errors.hpp"

namespace imseg {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i)
        os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

/// Recording is on by default; `NoGradGuard` turns it off for the current thread.
class GradMode {
  public:
    static bool enabled() noexcept { return flag(); }
    static void set(bool on) noexcept { flag() = on; }

  private:
    static bool& flag() noexcept {
        thread_local bool on = true;
        return on;
    }
};

class NoGradGuard {
  public:
    NoGradGuard() noexcept : prev_(GradMode::enabled()) { GradMode::set(false); }
    ~NoGradGuard() { GradMode::set(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

template <class T>
struct TensorNode {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad; // empty until something is accumulated
    bool requires_grad = false;
    bool backward_done = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(TensorNode&)> backward;

    std::vector<T>& ensure_grad() {
        if (grad.empty())
            grad.assign(value.size(), T(0));
        return grad;
    }
};

/// Dense row-major array that records the operations producing it.
///
/// A `Tensor` is a cheap shared handle. Values are fixed after construction
/// except through `mutable_data()`, which the optimizer uses between steps.
/// The graph is owned by the result tensors of one forward pass and dies
/// with them.
template <class T>
class Tensor {
  public:
    using value_type = T;
    using Node = TensorNode<T>;

    Tensor() : node_(std::make_shared<Node>()) { node_->shape = {0}; }

    Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
        : node_(std::make_shared<Node>()) {
        if (shape_size(shape) != values.size())
            throw DimensionError("tensor shape " + shape_str(shape) + " holds " +
                                 std::to_string(shape_size(shape)) + " values, got " +
                                 std::to_string(values.size()));
        node_->shape = std::move(shape);
        node_->value = std::move(values);
        node_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        const auto n = shape_size(shape);
        return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
    }
    static Tensor full(Shape shape, T v) {
        const auto n = shape_size(shape);
        return Tensor(std::move(shape), std::vector<T>(n, v));
    }
    static Tensor ones(Shape shape) { return full(std::move(shape), T(1)); }
    static Tensor scalar(T v) { return Tensor(Shape{}, {v}); }

    const Shape& shape() const noexcept { return node_->shape; }
    std::size_t rank() const noexcept { return node_->shape.size(); }
    std::size_t size() const noexcept { return node_->value.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    /// Extent of the last axis (1 for scalars).
    std::size_t cols() const noexcept { return rank() == 0 ? 1 : node_->shape.back(); }
    /// Product of every axis except the last.
    std::size_t rows() const noexcept { return cols() == 0 ? 0 : size() / cols(); }

    std::span<const T> data() const noexcept { return node_->value; }
    std::span<T> mutable_data() noexcept { return node_->value; }
    const std::vector<T>& values() const& noexcept { return node_->value; }
    std::vector<T> values() && { return node_->value; }
    T operator[](std::size_t i) const { return node_->value[i]; }
    T at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
    T item() const {
        if (size() != 1)
            throw ContractError("item() on tensor of shape " + shape_str(shape()));
        return node_->value[0];
    }

    bool requires_grad() const noexcept { return node_->requires_grad; }
    void set_requires_grad(bool on) noexcept { node_->requires_grad = on; }
    bool has_grad() const noexcept { return !node_->grad.empty(); }
    /// Accumulated gradient; zeros when nothing has been accumulated.
    std::vector<T> grad() const {
        return has_grad() ? node_->grad : std::vector<T>(size(), T(0));
    }
    std::span<const T> grad_span() const noexcept { return node_->grad; }
    void zero_grad() noexcept {
        node_->grad.clear();
        node_->backward_done = false;
    }

    /// Copy of the values with no history.
    Tensor detach() const { return Tensor(shape(), node_->value); }
    Tensor clone() const { return Tensor(shape(), node_->value, requires_grad()); }

    /// Reverse-mode sweep from this scalar. Throws on a non-scalar or on a
    /// second call against the same graph.
    void backward() {
        if (size() != 1)
            throw ContractError("backward() needs a scalar loss, got shape " + shape_str(shape()));
        if (node_->backward_done)
            throw ContractError("backward() called twice on the same graph without zero_grad()");
        node_->backward_done = true;
        if (!node_->requires_grad)
            return;

        std::vector<Node*> order;
        std::unordered_set<Node*> seen;
        std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, next] = stack.back();
            if (next < n->parents.size()) {
                Node* p = n->parents[next++].get();
                if (p->requires_grad && seen.insert(p).second)
                    stack.emplace_back(p, 0);
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
        node_->ensure_grad()[0] += T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* n = *it;
            if (n->backward && !n->grad.empty())
                n->backward(*n);
        }
    }

    const std::shared_ptr<Node>& node() const noexcept { return node_; }
    bool same_as(const Tensor& o) const noexcept { return node_ == o.node_; }

    /// Builds an op result. History is kept only when recording is on and a
    /// parent needs gradients; otherwise parents and `backward` are dropped.
    static Tensor make(Shape shape, std::vector<T> values, std::vector<Tensor> parents,
                       std::function<void(Node&)> backward) {
        Tensor out(std::move(shape), std::move(values));
        if (!GradMode::enabled())
            return out;
        bool any = false;
        for (const auto& p : parents)
            any = any || p.requires_grad();
        if (!any)
            return out;
        out.node_->requires_grad = true;
        for (auto& p : parents)
            out.node_->parents.push_back(p.node_);
        out.node_->backward = std::move(backward);
        return out;
    }

  private:
    std::shared_ptr<Node> node_;
};

template <class T>
Tensor<T> make_parameter(Shape shape, std::vector<T> values) {
    return Tensor<T>(std::move(shape), std::move(values), true);
}

} // namespace imseg
