#include "uapforge/attack/attack_config.hpp"

#include <cmath>
#include <string>

#include "uapforge/errors.hpp"

namespace uapforge {

std::string_view to_string(NormType p) { return p == NormType::L2 ? "2" : "inf"; }

std::string_view to_string(AttackMode mode) {
    return mode == AttackMode::Targeted ? "targeted" : "nontargeted";
}

std::string_view to_string(FffInput input) {
    return input == FffInput::Adversarial ? "adversarial" : "perturbation";
}

NormType parse_norm(std::string_view text) {
    if (text == "inf" || text == "linf") return NormType::Linf;
    if (text == "2" || text == "l2") return NormType::L2;
    throw ConfigError("attack.norm: expected \"inf\" or \"2\", got \"" + std::string(text) + "\"");
}

AttackMode parse_mode(std::string_view text) {
    if (text == "nontargeted") return AttackMode::NonTargeted;
    if (text == "targeted") return AttackMode::Targeted;
    throw ConfigError("attack.mode: expected \"nontargeted\" or \"targeted\", got \"" + std::string(text) + "\"");
}

FffInput parse_fff_input(std::string_view text) {
    if (text == "adversarial") return FffInput::Adversarial;
    if (text == "perturbation") return FffInput::Perturbation;
    throw ConfigError("attack.fff_input: expected \"adversarial\" or \"perturbation\", got \"" + std::string(text) +
                      "\"");
}

void AttackConfig::validate(std::size_t num_classes) const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("attack.alpha: α must lie in [0,1]");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigError("attack.epsilon: ε must be positive");
    if (batch_size == 0) throw ConfigError("attack.batch_size: must be positive");
    if (!(adam.lr >= 0.0)) throw ConfigError("attack.lr: must be non-negative");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw ConfigError("attack.beta1: must lie in [0,1)");
    if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw ConfigError("attack.beta2: must lie in [0,1)");
    if (mode == AttackMode::Targeted) {
        if (!target_class) throw ConfigError("attack.target_class: targeted mode requires a target class");
        if (*target_class < 0 || (num_classes > 0 && std::size_t(*target_class) >= num_classes)) {
            throw ConfigError("attack.target_class: class " + std::to_string(*target_class) + " out of range");
        }
    }
}

double internal_epsilon(const AttackConfig& config, std::size_t pixels_per_image) {
    const double eps = config.epsilon / 255.0;
    if (config.norm == NormType::Linf) return eps;
    return eps * std::sqrt(double(pixels_per_image) / double(3 * 224 * 224));
}

}  // namespace uapforge
