#pragma once

#include <cstddef>

#include "uapforge/tensor/graph.hpp"

// Forward operations with registered adjoints. Every op checks its shape
// contract and throws ContractViolation naming itself and the offending shapes.
namespace uapforge::ops {

struct Conv2dOptions {
    std::size_t stride = 1;
    std::size_t padding = 0;
};

/// x: N x C x H x W, weight: O x C x k x k, bias: O (or invalid Var for none).
template <class T>
Var<T> conv2d(Var<T> x, Var<T> weight, Var<T> bias, Conv2dOptions opt = {});

/// x: N x C x H x W, weight: C x O x k x k. Output side (H - 1) * stride - 2 * padding + k.
template <class T>
Var<T> conv_transpose2d(Var<T> x, Var<T> weight, Var<T> bias, Conv2dOptions opt = {});

template <class T>
Var<T> relu(Var<T> x);

/// x: N x K, weight: O x K, bias: O.
template <class T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias);

/// Non-overlapping or strided max pooling without padding; ties pick the first element.
template <class T>
Var<T> max_pool2d(Var<T> x, std::size_t kernel, std::size_t stride);

/// N x C x H x W -> N x C.
template <class T>
Var<T> global_avg_pool(Var<T> x);

/// Running statistics owned by the model, updated in training mode.
template <class T>
struct BatchNormStats {
    BasicTensor<T> mean;
    BasicTensor<T> var;
};

struct BatchNormOptions {
    bool training = true;
    double momentum = 0.1;
    double eps = 1e-5;
};

/// Per-channel normalization of N x C x H x W. Training mode normalizes with
/// batch statistics and updates `stats` (when non-null); inference uses `stats`.
template <class T>
Var<T> batch_norm(Var<T> x, Var<T> gamma, Var<T> beta, BatchNormStats<T>* stats, BatchNormOptions opt = {});

/// Elementwise sum. `b` may also be 1 x ... with the rest of a's shape, and is
/// then broadcast over the leading (batch) axis.
template <class T>
Var<T> add(Var<T> a, Var<T> b);

/// Elementwise product of equal shapes.
template <class T>
Var<T> mul(Var<T> a, Var<T> b);

template <class T>
Var<T> scale(Var<T> x, T factor);

/// x times a scalar node `s` (shape [1]); gradient flows into both.
template <class T>
Var<T> scale_by(Var<T> x, Var<T> s);

/// Gradient passes inside [lo, hi] and is zero outside or on the boundary.
template <class T>
Var<T> clamp(Var<T> x, T lo, T hi);

/// Row-wise softmax over the class axis of N x M, max-subtracted.
template <class T>
Var<T> softmax(Var<T> x);

/// Row-wise log(softmax(x)) computed without forming probabilities.
template <class T>
Var<T> log_softmax(Var<T> x);

/// max(x, lo); gradient passes where x > lo.
template <class T>
Var<T> clamp_min(Var<T> x, T lo);

template <class T>
Var<T> log(Var<T> x);

template <class T>
Var<T> reciprocal(Var<T> x);

/// Mean of all elements -> [1].
template <class T>
Var<T> mean(Var<T> x);

/// Sum of all elements -> [1].
template <class T>
Var<T> sum(Var<T> x);

/// Euclidean norm of the flattened tensor -> [1].
template <class T>
Var<T> l2_norm(Var<T> x);

/// Euclidean norm of each leading-axis slice -> [N].
template <class T>
Var<T> l2_norm_rows(Var<T> x);

/// Largest absolute value -> [1]; gradient goes to the first maximizer.
template <class T>
Var<T> max_abs(Var<T> x);

/// N x C x H x W -> N x H x W, mean across channels.
template <class T>
Var<T> channel_mean(Var<T> x);

template <class T>
Var<T> reshape(Var<T> x, Shape shape);

/// Forward-only; the result never carries a gradient.
template <class T>
Var<T> sign(Var<T> x);

}  // namespace uapforge::ops
