#include "uapforge/tensor/adam.hpp"

#include <cmath>
#include <string>

namespace uapforge {

template <class T>
AdamState<T>::AdamState(AdamOptions opt, std::span<const BasicTensor<T>> params) : options(opt) {
    m.reserve(params.size());
    v.reserve(params.size());
    for (const auto& p : params) {
        m.emplace_back(p.shape());
        v.emplace_back(p.shape());
    }
}

template <class T>
void adam_step(std::span<BasicTensor<T>> params, std::span<const BasicTensor<T>> grads, AdamState<T>& state) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw ContractViolation("adam_step: " + std::to_string(params.size()) + " parameters, " +
                                std::to_string(grads.size()) + " gradients, " + std::to_string(state.m.size()) +
                                " accumulators");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].shape() != grads[i].shape() || params[i].shape() != state.m[i].shape()) {
            throw ContractViolation("adam_step: parameter " + shape_str(params[i].shape()) + " vs gradient " +
                                    shape_str(grads[i].shape()));
        }
        if (!grads[i].all_finite()) {
            throw NumericFailure("adam_step: non-finite gradient for parameter " + std::to_string(i));
        }
    }

    ++state.step;
    const AdamOptions& o = state.options;
    const double c1 = 1.0 - std::pow(o.beta1, double(state.step));
    const double c2 = 1.0 - std::pow(o.beta2, double(state.step));
    const T b1 = T(o.beta1), b2 = T(o.beta2);
    const T step_size = T(o.lr / c1);
    const T inv_c2 = T(1.0 / c2);
    const T eps = T(o.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i].data();
        auto g = grads[i].data();
        auto m = state.m[i].data();
        auto v = state.v[i].data();
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = b1 * m[k] + (T{1} - b1) * g[k];
            v[k] = b2 * v[k] + (T{1} - b2) * g[k] * g[k];
            p[k] -= step_size * m[k] / (std::sqrt(v[k] * inv_c2) + eps);
        }
    }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(std::span<BasicTensor<float>>, std::span<const BasicTensor<float>>, AdamState<float>&);
template void adam_step(std::span<BasicTensor<double>>, std::span<const BasicTensor<double>>, AdamState<double>&);

}  // namespace uapforge
