#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "beamcast/errors.hpp"

namespace beamcast {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << ']';
    return os.str();
}

template <typename Scalar>
using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

inline std::uint64_t next_node_id()
{
    static std::atomic<std::uint64_t> counter{0};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

inline bool& grad_mode_flag()
{
    thread_local bool enabled = true;
    return enabled;
}

template <typename Scalar>
struct Node {
    Shape shape;
    Array<Scalar> data;
    Array<Scalar> grad;
    bool requires_grad = false;
    bool consumed = false;
    std::uint64_t id = next_node_id();
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(const Node&)> backward;

    void accumulate_grad(const Array<Scalar>& g)
    {
        if (!requires_grad) {
            return;
        }
        if (grad.size() == 0) {
            grad = g;
        } else {
            grad += g;
        }
    }
};

} // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Dense row-major n-dimensional array with optional reverse-mode gradient.
///
/// A Tensor is a shared handle: copies alias the same storage and graph node,
/// so parameters can be captured by the operations that consume them. Use
/// `clone()` for an independent copy.
template <typename Scalar>
class Tensor {
public:
    using Node = detail::Node<Scalar>;

    Tensor() : node_(std::make_shared<Node>()) {}

    Tensor(Shape shape, Array<Scalar> data, bool requires_grad = false) : node_(std::make_shared<Node>())
    {
        if (shape_size(shape) != data.size()) {
            throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                                 std::to_string(data.size()) + " values");
        }
        for (Index d : shape) {
            if (d <= 0) {
                throw DimensionError("tensor shape " + shape_str(shape) + " has a non-positive extent");
            }
        }
        node_->shape = std::move(shape);
        node_->data = std::move(data);
        node_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false)
    {
        const Index n = shape_size(shape);
        return Tensor(std::move(shape), Array<Scalar>::Zero(n), requires_grad);
    }

    static Tensor full(Shape shape, Scalar value, bool requires_grad = false)
    {
        const Index n = shape_size(shape);
        return Tensor(std::move(shape), Array<Scalar>::Constant(n, value), requires_grad);
    }

    static Tensor from_values(Shape shape, std::initializer_list<Scalar> values, bool requires_grad = false)
    {
        Array<Scalar> data(static_cast<Index>(values.size()));
        std::copy(values.begin(), values.end(), data.begin());
        return Tensor(std::move(shape), std::move(data), requires_grad);
    }

    static Tensor scalar(Scalar value, bool requires_grad = false)
    {
        return full({1}, value, requires_grad);
    }

    const Shape& shape() const { return node_->shape; }
    Index dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t ndim() const { return node_->shape.size(); }
    Index size() const { return node_->data.size(); }

    Array<Scalar>& data() { return node_->data; }
    const Array<Scalar>& data() const { return node_->data; }
    Scalar* raw() { return node_->data.data(); }
    const Scalar* raw() const { return node_->data.data(); }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool value) { node_->requires_grad = value; }

    bool has_grad() const { return node_->grad.size() == node_->data.size(); }
    const Array<Scalar>& grad() const { return node_->grad; }
    Array<Scalar>& grad() { return node_->grad; }
    void zero_grad() { node_->grad.resize(0); }

    Scalar item() const
    {
        if (size() != 1) {
            throw DimensionError("item() on tensor of shape " + shape_str(shape()));
        }
        return node_->data[0];
    }

    Scalar operator[](Index i) const { return node_->data[i]; }

    /// Row-major view as a rows x cols matrix.
    Eigen::Map<const RowMatrix<Scalar>> matrix(Index rows, Index cols) const
    {
        return Eigen::Map<const RowMatrix<Scalar>>(raw(), rows, cols);
    }

    Tensor clone() const
    {
        Tensor copy(shape(), data(), requires_grad());
        return copy;
    }

    /// Detached copy sharing nothing with the graph.
    Tensor detach() const { return Tensor(shape(), data(), false); }

    /// Reverse pass from this scalar. Every node reachable through tensors
    /// that require grad accumulates into `grad()`. A graph can be walked once.
    void backward()
    {
        if (size() != 1) {
            throw DimensionError("backward() requires a scalar, got " + shape_str(shape()));
        }
        if (node_->consumed) {
            throw Error("backward() called twice on the same graph");
        }
        if (!node_->requires_grad) {
            return;
        }

        // Owning pointers: releasing parents below must not free nodes still listed.
        std::vector<std::shared_ptr<Node>> order;
        std::unordered_set<const Node*> seen;
        std::vector<std::shared_ptr<Node>> stack{node_};
        while (!stack.empty()) {
            std::shared_ptr<Node> n = std::move(stack.back());
            stack.pop_back();
            if (!seen.insert(n.get()).second) {
                continue;
            }
            for (const auto& p : n->parents) {
                if (p->requires_grad) {
                    stack.push_back(p);
                }
            }
            order.push_back(std::move(n));
        }
        // Node ids increase with creation time, so descending id is a valid
        // reverse topological order.
        std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a->id > b->id; });

        node_->accumulate_grad(Array<Scalar>::Ones(1));
        for (const auto& n : order) {
            if (n->backward && n->grad.size() == n->data.size()) {
                n->backward(*n);
            }
        }
        for (const auto& n : order) {
            if (n->backward) {
                n->backward = nullptr;
                n->parents.clear();
                n->consumed = true;
            }
        }
    }

    std::shared_ptr<Node> node() const { return node_; }

    /// Result of an operation. `backward` receives the finished output node
    /// (data and accumulated grad) and pushes gradients into the inputs it
    /// captured. Records nothing when grad mode is off or no input needs grad.
    static Tensor make_result(Shape shape, Array<Scalar> data, std::initializer_list<const Tensor*> inputs,
                              std::function<void(const Node&)> backward)
    {
        Tensor out(std::move(shape), std::move(data));
        if (!grad_enabled()) {
            return out;
        }
        bool any = false;
        for (const Tensor* in : inputs) {
            any = any || (in != nullptr && in->requires_grad());
        }
        if (!any) {
            return out;
        }
        out.node_->requires_grad = true;
        for (const Tensor* in : inputs) {
            if (in != nullptr) {
                out.node_->parents.push_back(in->node_);
            }
        }
        out.node_->backward = std::move(backward);
        return out;
    }

    void accumulate_grad(const Array<Scalar>& g) const { node_->accumulate_grad(g); }

private:
    std::shared_ptr<Node> node_;
};

template <typename Scalar>
struct NamedTensor {
    std::string name;
    Tensor<Scalar> tensor;
};

template <typename Scalar>
using ParamList = std::vector<NamedTensor<Scalar>>;

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t, bool requires_grad = false)
{
    return Tensor<To>(t.shape(), t.data().template cast<To>(), requires_grad);
}

} // namespace beamcast
