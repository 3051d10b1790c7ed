#pragma once

#include <span>

namespace uapforge::eval {

/// Percentage of positions where the adversarial prediction differs from the
/// clean prediction. Labels are not consulted.
double fooling_rate(std::span<const int> clean, std::span<const int> adversarial);

/// Percentage of adversarial predictions equal to `target`.
double top1_target_accuracy(std::span<const int> adversarial, int target, std::size_t num_classes);

/// Percentage of predictions equal to the label.
double accuracy(std::span<const int> predictions, std::span<const int> labels);

}  // namespace uapforge::eval
