#include "uapforge/eval/metrics.hpp"

#include <string>

#include "uapforge/errors.hpp"

namespace uapforge::eval {
namespace {

void check_sizes(const char* op, std::size_t a, std::size_t b) {
    if (a == 0) throw ContractViolation(std::string(op) + ": empty dataset");
    if (a != b) {
        throw ContractViolation(std::string(op) + ": " + std::to_string(a) + " vs " + std::to_string(b) +
                                " predictions");
    }
}

}  // namespace

double fooling_rate(std::span<const int> clean, std::span<const int> adversarial) {
    check_sizes("fooling_rate", clean.size(), adversarial.size());
    std::size_t changed = 0;
    for (std::size_t i = 0; i < clean.size(); ++i) changed += clean[i] != adversarial[i];
    return 100.0 * double(changed) / double(clean.size());
}

double top1_target_accuracy(std::span<const int> adversarial, int target, std::size_t num_classes) {
    if (target < 0 || std::size_t(target) >= num_classes) {
        throw ContractViolation("top1_target_accuracy: target class " + std::to_string(target) + " out of range");
    }
    check_sizes("top1_target_accuracy", adversarial.size(), adversarial.size());
    std::size_t hits = 0;
    for (int p : adversarial) hits += p == target;
    return 100.0 * double(hits) / double(adversarial.size());
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
    check_sizes("accuracy", predictions.size(), labels.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
    return 100.0 * double(hits) / double(labels.size());
}

}  // namespace uapforge::eval
