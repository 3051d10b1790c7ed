#include "uapforge/loss/losses.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace uapforge::loss {
namespace {

void check_alpha(double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ContractViolation("loss: α must lie in [0,1]");
}

template <class T>
void check_one_hot(const char* op, const Shape& probs, const BasicTensor<T>& onehot) {
    if (probs.size() != 2 || onehot.shape() != probs) {
        throw ContractViolation(std::string(op) + ": incompatible shapes " + shape_str(probs) + " and " +
                                shape_str(onehot.shape()));
    }
    const std::size_t n = probs[0], m = probs[1];
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t ones = 0;
        for (std::size_t j = 0; j < m; ++j) {
            const T v = onehot[i * m + j];
            if (v == T{1}) {
                ++ones;
            } else if (v != T{0}) {
                ones = 2;
            }
        }
        if (ones != 1) throw ContractViolation(std::string(op) + ": row " + std::to_string(i) + " is not one-hot");
    }
}

}  // namespace

template <class T>
BasicTensor<T> one_hot(std::span<const int> labels, std::size_t num_classes) {
    BasicTensor<T> out({labels.size(), num_classes});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || std::size_t(labels[i]) >= num_classes) {
            throw ContractViolation("one_hot: label " + std::to_string(labels[i]) + " out of range");
        }
        out[i * num_classes + std::size_t(labels[i])] = T{1};
    }
    return out;
}

template <class T>
Var<T> cross_entropy(Var<T> probs, const BasicTensor<T>& onehot) {
    check_one_hot("cross_entropy", probs.shape(), onehot);
    const std::size_t n = probs.shape()[0], m = probs.shape()[1];
    for (std::size_t i = 0; i < n; ++i) {
        T total{0};
        for (std::size_t j = 0; j < m; ++j) total += probs.value()[i * m + j];
        if (std::abs(double(total) - 1.0) > 1e-6) {
            throw ContractViolation("cross_entropy: row " + std::to_string(i) + " sums to " + std::to_string(total));
        }
    }
    Graph<T>& g = probs.graph();
    auto logp = ops::log(ops::clamp_min(probs, T(kProbabilityFloor)));
    return ops::scale(ops::sum(ops::mul(logp, g.constant(onehot))), T(-1) / T(n));
}

template <class T>
Var<T> cross_entropy_logits(Var<T> logits, const BasicTensor<T>& onehot) {
    check_one_hot("cross_entropy_logits", logits.shape(), onehot);
    const std::size_t n = logits.shape()[0];
    Graph<T>& g = logits.graph();
    auto logp = ops::clamp_min(ops::log_softmax(logits), T(std::log(kProbabilityFloor)));
    return ops::scale(ops::sum(ops::mul(logp, g.constant(onehot))), T(-1) / T(n));
}

template <class T>
Var<T> fff_layer_loss(Var<T> map) {
    if (map.value().rank() == 2) map = ops::reshape(map, {1, map.shape()[0], map.shape()[1]});
    if (map.value().rank() != 3) {
        throw ContractViolation("fff_layer_loss: expected N x H x W map, got " + shape_str(map.shape()));
    }
    auto norms = ops::l2_norm_rows(map);
    for (T v : norms.value().data()) {
        if (v == T{0}) throw DegenerateActivation("fff_layer_loss: mean feature map is identically zero");
    }
    return ops::scale(ops::mean(ops::log(norms)), T(-1));
}

template <class T>
Var<T> fff_total_loss(std::span<const Var<T>> maps) {
    if (maps.empty()) throw ContractViolation("fff_total_loss: no layers given");
    Var<T> total = fff_layer_loss(maps[0]);
    for (std::size_t l = 1; l < maps.size(); ++l) total = ops::add(total, fff_layer_loss(maps[l]));
    return total;
}

LossBreakdown nontargeted_loss(real ce, real fff_1, real alpha) {
    check_alpha(alpha);
    return {.ce = ce,
            .fff_1 = fff_1,
            .combined = alpha * (-ce) + (real(1) - alpha) * fff_1,
            .alpha = alpha,
            .mode = AttackMode::NonTargeted,
            .target_class = std::nullopt};
}

LossBreakdown targeted_loss(real ce_target, real fff_1, real alpha, int target_class, std::size_t num_classes) {
    check_alpha(alpha);
    if (target_class < 0 || std::size_t(target_class) >= num_classes) {
        throw ContractViolation("targeted_loss: target class " + std::to_string(target_class) + " out of range");
    }
    return {.ce = ce_target,
            .fff_1 = fff_1,
            .combined = alpha * ce_target + (real(1) - alpha) * fff_1,
            .alpha = alpha,
            .mode = AttackMode::Targeted,
            .target_class = target_class};
}

template <class T>
Var<T> combined_loss(Var<T> ce, Var<T> fff_1, T alpha, AttackMode mode) {
    check_alpha(alpha);
    // (-alpha) * ce is bitwise alpha * (-ce): negation is exact.
    const T ce_weight = mode == AttackMode::NonTargeted ? -alpha : alpha;
    return ops::add(ops::scale(ce, ce_weight), ops::scale(fff_1, T(1) - alpha));
}

#define UAPFORGE_INSTANTIATE_LOSSES(T)                                                  \
    template BasicTensor<T> one_hot<T>(std::span<const int>, std::size_t);              \
    template Var<T> cross_entropy(Var<T>, const BasicTensor<T>&);                        \
    template Var<T> cross_entropy_logits(Var<T>, const BasicTensor<T>&);                 \
    template Var<T> fff_layer_loss(Var<T>);                                              \
    template Var<T> fff_total_loss(std::span<const Var<T>>);                             \
    template Var<T> combined_loss(Var<T>, Var<T>, T, AttackMode);

UAPFORGE_INSTANTIATE_LOSSES(float)
UAPFORGE_INSTANTIATE_LOSSES(double)

}  // namespace uapforge::loss
