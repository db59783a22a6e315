// Copyright 2026 The hsmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hsmtl/error.hpp"

namespace hsmtl {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

/// One vertex of the dynamic computation graph. Leaves carry no parents;
/// interior nodes keep their parents and a closure that pushes `grad` back
/// into them. The closure receives the node itself so it never has to own a
/// reference to it.
template <typename T>
struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until some gradient arrives
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;
    // Set on softmax outputs: lets cross-entropy route (p - onehot)/B straight
    // into the logits instead of differentiating through the softmax.
    std::shared_ptr<Node> softmax_logits;

    bool is_leaf() const { return parents.empty() && !backward; }

    std::vector<T>& ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), T(0));
        return grad;
    }
};

/// Dense row-major tensor with optional reverse-mode gradient tracking.
/// Copies share the underlying node, so a parameter captured in a graph and
/// the handle held by its owner refer to the same storage.
template <typename T>
class BasicTensor {
public:
    using value_type = T;
    using NodePtr = std::shared_ptr<Node<T>>;

    BasicTensor() : node_(std::make_shared<Node<T>>()) {}

    explicit BasicTensor(Shape shape, T fill = T(0), bool requires_grad = false)
        : node_(std::make_shared<Node<T>>()) {
        node_->data.assign(numel(shape), fill);
        node_->shape = std::move(shape);
        node_->requires_grad = requires_grad;
    }

    BasicTensor(Shape shape, std::vector<T> values, bool requires_grad = false)
        : node_(std::make_shared<Node<T>>()) {
        if (numel(shape) != values.size()) {
            throw DimensionError("tensor of shape " + shape_str(shape) + " needs " +
                                 std::to_string(numel(shape)) + " values, got " +
                                 std::to_string(values.size()));
        }
        node_->shape = std::move(shape);
        node_->data = std::move(values);
        node_->requires_grad = requires_grad;
    }

    static BasicTensor scalar(T value, bool requires_grad = false) {
        return BasicTensor(Shape{1}, std::vector<T>{value}, requires_grad);
    }

    static BasicTensor from_node(NodePtr node) {
        BasicTensor t;
        t.node_ = std::move(node);
        return t;
    }

    const Shape& shape() const { return node_->shape; }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size() const { return node_->data.size(); }

    std::vector<T>& data() { return node_->data; }
    const std::vector<T>& data() const { return node_->data; }
    T item() const {
        if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
        return node_->data[0];
    }
    T& operator[](std::size_t i) { return node_->data[i]; }
    T operator[](std::size_t i) const { return node_->data[i]; }

    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<T>& grad() const { return node_->grad; }
    std::vector<T>& mutable_grad() { return node_->ensure_grad(); }
    void zero_grad() { node_->grad.clear(); }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }

    const NodePtr& node() const { return node_; }
    const Node<T>* id() const { return node_.get(); }

    /// Fresh leaf holding a copy of the values, detached from any graph.
    BasicTensor detach_copy() const { return BasicTensor(shape(), data(), false); }

    void backward() const;

private:
    NodePtr node_;
};

using Tensor = BasicTensor<float>;

namespace detail {

template <typename T>
std::vector<Node<T>*> topo_order(Node<T>* root) {
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    // Iterative post-order DFS; graphs for deep encoders exceed comfortable
    // recursion depth.
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{root, 0}};
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* parent = node->parents[next++].get();
            if (seen.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

}  // namespace detail

/// Leaves reachable from `root` that require gradients. Used to audit which
/// parameter tensors a forward pass actually consumed.
template <typename T>
std::unordered_set<const Node<T>*> graph_leaves(const BasicTensor<T>& root) {
    std::unordered_set<const Node<T>*> leaves;
    for (Node<T>* n : detail::topo_order(root.node().get())) {
        if (n->is_leaf() && n->requires_grad) leaves.insert(n);
    }
    return leaves;
}

/// Reverse-mode sweep from a scalar. Gradients accumulate (sum) at fan-out;
/// interior nodes drop their parents and closures afterwards so the graph is
/// released once the sweep finishes.
template <typename T>
void BasicTensor<T>::backward() const {
    if (size() != 1) {
        throw DimensionError("backward() needs a scalar, got shape " + shape_str(shape()));
    }
    auto order = detail::topo_order(node_.get());
    node_->ensure_grad()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }
    for (Node<T>* n : order) {
        if (!n->is_leaf()) {
            n->parents.clear();
            n->backward = nullptr;
            n->softmax_logits.reset();
        }
    }
}

}  // namespace hsmtl
