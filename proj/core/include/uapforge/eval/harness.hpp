#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uapforge/attack/uap.hpp"
#include "uapforge/data/dataset.hpp"
#include "uapforge/eval/metrics.hpp"
#include "uapforge/zoo/model.hpp"

namespace uapforge::eval {

struct EvalOptions {
    std::size_t jobs = 1;
    std::size_t batch_size = 256;
};

struct FoolingReport {
    std::string target_arch;
    nlohmann::json perturbation = nlohmann::json::object();
    std::size_t n_images = 0;
    double fooling_rate = 0;
    double clean_accuracy = 0;
    double adversarial_accuracy = 0;
    std::optional<double> baseline_fooling_rate;
    std::optional<int> target_class;
    std::optional<double> target_accuracy;

    // Outcome counts; adv_correct + changed_to_wrong + stayed_wrong == n_images.
    std::size_t adv_correct = 0;
    std::size_t changed_to_wrong = 0;
    std::size_t stayed_wrong = 0;

    friend bool operator==(const FoolingReport&, const FoolingReport&) = default;
};

/// Fooling rate of `r` against a frozen model over a whole dataset.
double fooling_rate(const zoo::Model& target, const data::Dataset& dataset, const Tensor& r,
                    const EvalOptions& options = {});

/// Share of perturbed images classified as `target_class`.
double top1_target_accuracy(const zoo::Model& target, const data::Dataset& dataset, const Tensor& r, int target_class,
                            const EvalOptions& options = {});

/// Full report for one perturbation (and optionally a baseline of the same
/// shape). A targeted perturbation also gets its top-1 target accuracy.
FoolingReport evaluate(const zoo::Model& target, const data::Dataset& dataset, const attack::Perturbation& perturbation,
                       const attack::Perturbation* baseline = nullptr, const EvalOptions& options = {});

/// Uniform noise in [-1, 1] projected onto the ε-ball.
attack::Perturbation random_noise_baseline(NormType p, real epsilon, std::uint64_t seed, const Shape& chw);

struct TransferabilityMatrix {
    std::vector<std::string> archs;
    /// rates[source][target], percentages.
    std::vector<std::vector<double>> rates;
    /// Mean of each row without its diagonal entry.
    std::vector<double> avg_plus;

    friend bool operator==(const TransferabilityMatrix&, const TransferabilityMatrix&) = default;
};

/// Mean of `row` excluding index `diagonal`.
double off_diagonal_mean(std::span<const double> row, std::size_t diagonal);

/// perturbations[i] was crafted on models[i]. All perturbations must share
/// the same norm and ε.
TransferabilityMatrix transferability_matrix(const std::vector<const zoo::Model*>& models,
                                             const std::vector<const attack::Perturbation*>& perturbations,
                                             const data::Dataset& dataset, const EvalOptions& options = {});

struct AlphaSweepRow {
    double alpha = 0;
    /// On the tuning split.
    double fooling_rate = 0;
    /// Last history row on the training split.
    double train_fooling_rate = 0;
    double final_loss = 0;
    bool aborted = false;

    friend bool operator==(const AlphaSweepRow&, const AlphaSweepRow&) = default;
};

struct AlphaSweepTable {
    std::string source_arch;
    std::vector<AlphaSweepRow> rows;
    /// Row with the highest tuning fooling rate; ties go to the first.
    std::size_t best = 0;

    friend bool operator==(const AlphaSweepTable&, const AlphaSweepTable&) = default;
};

/// One train_uap run per α, each from a copy of `generator` and the same
/// seeds, scored on `tune`. The two splits must not share an image.
AlphaSweepTable alpha_sweep(const zoo::Model& generator, const zoo::Model& source, const data::Dataset& train,
                            const data::Dataset& tune, std::span<const double> alphas,
                            const AttackConfig& config, const EvalOptions& options = {});

}  // namespace uapforge::eval
