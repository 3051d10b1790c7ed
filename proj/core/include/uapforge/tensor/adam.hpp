#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "uapforge/tensor/tensor.hpp"

namespace uapforge {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment accumulators, one per parameter tensor.
template <class T>
struct AdamState {
    AdamOptions options;
    std::uint64_t step = 0;
    std::vector<BasicTensor<T>> m;
    std::vector<BasicTensor<T>> v;

    AdamState() = default;
    AdamState(AdamOptions opt, std::span<const BasicTensor<T>> params);
};

/// Bias-corrected Adam update in place. Increments the step counter before
/// computing the corrections. Throws NumericFailure on a non-finite gradient
/// and ContractViolation when shapes disagree.
template <class T>
void adam_step(std::span<BasicTensor<T>> params, std::span<const BasicTensor<T>> grads, AdamState<T>& state);

extern template struct AdamState<float>;
extern template struct AdamState<double>;

}  // namespace uapforge
