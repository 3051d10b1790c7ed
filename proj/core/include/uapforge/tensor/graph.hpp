#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "uapforge/tensor/tensor.hpp"

namespace uapforge {

template <class T>
class Graph;

/// Handle to a node recorded on a Graph. Cheap to copy; valid while the graph lives.
template <class T>
class Var {
public:
    Var() = default;
    Var(Graph<T>* graph, std::size_t id) : graph_(graph), id_(id) {}

    Graph<T>& graph() const { return *graph_; }
    std::size_t id() const { return id_; }
    bool valid() const { return graph_ != nullptr; }

    const BasicTensor<T>& value() const { return graph_->value(id_); }
    const BasicTensor<T>& grad() const { return graph_->grad(id_); }
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const { return graph_->requires_grad(id_); }

private:
    Graph<T>* graph_ = nullptr;
    std::size_t id_ = 0;
};

/// Tape of executed operations. Nodes are appended in execution order, so the
/// tape is always topologically sorted and backward is a single reverse sweep.
/// A graph is confined to one thread.
template <class T>
class Graph {
public:
    /// Propagates the node's output gradient into the gradients of its inputs.
    using Backward = std::function<void(Graph&, const BasicTensor<T>& out_grad)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var<T> constant(BasicTensor<T> value) { return push("constant", std::move(value), false, {}); }
    Var<T> param(BasicTensor<T> value) { return push("param", std::move(value), true, {}); }

    /// Records an op. The node requires a gradient iff any input does; the
    /// backward closure is dropped otherwise.
    Var<T> record(const char* op, BasicTensor<T> value, const std::vector<Var<T>>& inputs, Backward backward);

    /// Records an op whose output never carries a gradient (e.g. sign).
    Var<T> record_detached(const char* op, BasicTensor<T> value) {
        return push(op, std::move(value), false, {});
    }

    /// Reverse sweep from a scalar loss. Every requires_grad node receives a
    /// gradient (zero when unreachable). Throws NumericFailure naming the op
    /// whose adjoint produced a non-finite value.
    void backward(Var<T> loss);

    const BasicTensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
    const BasicTensor<T>& grad(std::size_t id) const;
    bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
    const std::string& op_name(std::size_t id) const { return nodes_.at(id).op; }
    std::size_t size() const { return nodes_.size(); }

    /// Accumulation target for backward closures; null when the input takes no gradient.
    BasicTensor<T>* grad_sink(Var<T> v);

private:
    struct Node {
        std::string op;
        BasicTensor<T> value;
        BasicTensor<T> grad;
        bool requires_grad = false;
        std::vector<std::size_t> inputs;
        Backward backward;
    };

    Var<T> push(const char* op, BasicTensor<T> value, bool requires_grad, Backward backward,
                std::vector<std::size_t> inputs = {});

    std::vector<Node> nodes_;
    bool grads_ready_ = false;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace uapforge
