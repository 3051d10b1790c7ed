#include "uapforge/tensor/graph.hpp"

namespace uapforge {

template <class T>
Var<T> Graph<T>::push(const char* op, BasicTensor<T> value, bool requires_grad, Backward backward,
                      std::vector<std::size_t> inputs) {
    Node node;
    node.op = op;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    node.inputs = std::move(inputs);
    if (requires_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    grads_ready_ = false;
    return Var<T>(this, nodes_.size() - 1);
}

template <class T>
Var<T> Graph<T>::record(const char* op, BasicTensor<T> value, const std::vector<Var<T>>& inputs,
                        Backward backward) {
    bool needs = false;
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    for (const Var<T>& in : inputs) {
        if (&in.graph() != this) throw ContractViolation(std::string(op) + ": inputs belong to another graph");
        needs = needs || nodes_[in.id()].requires_grad;
        ids.push_back(in.id());
    }
    return push(op, std::move(value), needs, std::move(backward), needs ? std::move(ids) : std::vector<std::size_t>{});
}

template <class T>
const BasicTensor<T>& Graph<T>::grad(std::size_t id) const {
    const Node& node = nodes_.at(id);
    if (!node.requires_grad) throw ContractViolation("grad: node '" + node.op + "' does not require a gradient");
    if (!grads_ready_) throw ContractViolation("grad: backward has not been run");
    return node.grad;
}

template <class T>
BasicTensor<T>* Graph<T>::grad_sink(Var<T> v) {
    Node& node = nodes_[v.id()];
    return node.requires_grad ? &node.grad : nullptr;
}

template <class T>
void Graph<T>::backward(Var<T> loss) {
    if (&loss.graph() != this) throw ContractViolation("backward: loss belongs to another graph");
    if (loss.value().size() != 1) {
        throw ContractViolation("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
    }
    for (Node& node : nodes_) {
        if (node.requires_grad) node.grad = BasicTensor<T>(node.value.shape());
    }
    grads_ready_ = true;
    if (!nodes_[loss.id()].requires_grad) return;
    nodes_[loss.id()].grad[0] = T{1};

    for (std::size_t id = loss.id() + 1; id-- > 0;) {
        Node& node = nodes_[id];
        if (!node.requires_grad || !node.backward) continue;
        node.backward(*this, node.grad);
        for (std::size_t in : node.inputs) {
            if (nodes_[in].requires_grad && !nodes_[in].grad.all_finite()) {
                throw NumericFailure("backward: adjoint of '" + node.op + "' produced a non-finite gradient");
            }
        }
    }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace uapforge
