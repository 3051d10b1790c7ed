#include "uapforge/loss/fgsm.hpp"

#include "uapforge/loss/losses.hpp"

namespace uapforge::loss {

Tensor fgsm(zoo::Model& model, const Tensor& x, std::span<const int> labels, real beta) {
    if (!model.frozen()) throw ContractViolation("fgsm: model " + model.arch_id() + " must be frozen");
    if (!(beta >= real(0))) throw ContractViolation("fgsm: β must be non-negative");
    if (x.rank() != 4 || x.dim(0) != labels.size()) {
        throw ContractViolation("fgsm: " + std::to_string(labels.size()) + " labels for input " + shape_str(x.shape()));
    }
    Graph<real> g;
    auto input = g.param(x);
    auto logits = model.forward(g, input).output;
    g.backward(cross_entropy_logits(logits, one_hot<real>(labels, model.num_classes())));
    const Tensor& grad = input.grad();
    if (!grad.all_finite()) throw NumericFailure("fgsm: non-finite input gradient");
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const real s = real((grad[i] > 0) - (grad[i] < 0));
        out[i] = std::clamp(x[i] + beta * s, real(0), real(1));
    }
    return out;
}

}  // namespace uapforge::loss
