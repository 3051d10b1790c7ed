#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "uapforge/tensor/adam.hpp"

namespace uapforge {

enum class NormType { L2, Linf };
enum class AttackMode { NonTargeted, Targeted };

/// Which image feeds the first-layer feature-fool term: the adversarial
/// example (default) or the perturbation alone.
enum class FffInput { Adversarial, Perturbation };

std::string_view to_string(NormType p);
std::string_view to_string(AttackMode mode);
std::string_view to_string(FffInput input);
NormType parse_norm(std::string_view text);
AttackMode parse_mode(std::string_view text);
FffInput parse_fff_input(std::string_view text);

struct AttackConfig {
    double alpha = 0.7;
    /// Bound in 0-255 pixel units; converted by internal_epsilon().
    double epsilon = 10.0;
    NormType norm = NormType::Linf;
    AttackMode mode = AttackMode::NonTargeted;
    std::optional<int> target_class;
    std::size_t epochs = 10;
    std::size_t batch_size = 64;
    AdamOptions adam{.lr = 2e-4, .beta1 = 0.5, .beta2 = 0.999, .eps = 1e-8};
    std::uint64_t seed = 0;
    FffInput fff_input = FffInput::Adversarial;

    /// Throws ConfigError naming the offending field.
    void validate(std::size_t num_classes = 0) const;
};

/// Perturbation bound for images in [0, 1]. L-inf: epsilon / 255. L2: the
/// bound is also rescaled by sqrt(pixels / (3 * 224 * 224)) so the per-pixel
/// RMS budget matches a 224 x 224 RGB image.
double internal_epsilon(const AttackConfig& config, std::size_t pixels_per_image);

}  // namespace uapforge
