#pragma once

#include <optional>
#include <span>
#include <vector>

#include "uapforge/attack/attack_config.hpp"
#include "uapforge/tensor/ops.hpp"

namespace uapforge::loss {

/// Floor applied to probabilities before taking the log.
inline constexpr double kProbabilityFloor = 1e-7;

template <class T>
BasicTensor<T> one_hot(std::span<const int> labels, std::size_t num_classes);

/// Mean over the batch of -sum(onehot * log(max(probs, 1e-7))). Rows of
/// `probs` must sum to 1 within 1e-6 and rows of `onehot` must be one-hot.
template <class T>
Var<T> cross_entropy(Var<T> probs, const BasicTensor<T>& onehot);

/// The same quantity evaluated from logits through log-softmax, so the
/// gradient survives when a probability rounds to exactly 1.
template <class T>
Var<T> cross_entropy_logits(Var<T> logits, const BasicTensor<T>& onehot);

/// -log of the Euclidean norm of each sample's mean feature map, averaged
/// over the batch. `map` is N x H x W (or H x W for one sample). Throws
/// DegenerateActivation when some map is identically zero.
template <class T>
Var<T> fff_layer_loss(Var<T> map);

/// Sum of fff_layer_loss over the given layers.
template <class T>
Var<T> fff_total_loss(std::span<const Var<T>> maps);

struct LossBreakdown {
    real ce = 0;
    real fff_1 = 0;
    real combined = 0;
    real alpha = 0;
    AttackMode mode = AttackMode::NonTargeted;
    std::optional<int> target_class;
};

/// combined = alpha * (-ce) + (1 - alpha) * fff_1.
LossBreakdown nontargeted_loss(real ce, real fff_1, real alpha);

/// combined = alpha * ce + (1 - alpha) * fff_1, ce taken against the target class.
LossBreakdown targeted_loss(real ce_target, real fff_1, real alpha, int target_class, std::size_t num_classes);

/// Graph form of the two objectives. Produces the same bits as the scalar
/// functions above for the same inputs.
template <class T>
Var<T> combined_loss(Var<T> ce, Var<T> fff_1, T alpha, AttackMode mode);

}  // namespace uapforge::loss
