#pragma once

#include <span>

#include "uapforge/zoo/model.hpp"

namespace uapforge::loss {

/// clamp(x + beta * sign(grad_x CE(S(x), labels)), 0, 1) for a frozen model.
/// Throws NumericFailure when the input gradient is not finite.
Tensor fgsm(zoo::Model& model, const Tensor& x, std::span<const int> labels, real beta);

}  // namespace uapforge::loss
