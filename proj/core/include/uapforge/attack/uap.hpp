#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uapforge/attack/attack_config.hpp"
#include "uapforge/data/dataset.hpp"
#include "uapforge/loss/losses.hpp"
#include "uapforge/zoo/model.hpp"

namespace uapforge::attack {

struct GeneratorInput {
    Tensor z;  // C x H x W, uniform in [0, 1]
    std::uint64_t seed = 0;
};

GeneratorInput sample_z(std::uint64_t seed, const Shape& chw);

/// Norm of the flattened tensor, accumulated in double.
double norm_of(const Tensor& t, NormType p);

/// raw * min(1, eps / ||raw||_p) with the gradient flowing through the
/// scale. A raw tensor already inside the ball (including all-zero) is
/// returned as the same node.
Var<real> project_norm(Var<real> raw, NormType p, real eps);
Tensor project_norm(const Tensor& raw, NormType p, real eps);

/// clamp(x + r, 0, 1); r is broadcast over the batch.
Var<real> apply_perturbation(Var<real> x, Var<real> r);
Tensor apply_perturbation(const Tensor& x, const Tensor& r);

/// A universal perturbation with its bound and provenance.
struct Perturbation {
    Tensor r;  // C x H x W
    NormType p = NormType::Linf;
    real epsilon = 0;  // in [0, 1] pixel units
    Tensor z;          // generator input; empty for baselines
    nlohmann::json metadata = nlohmann::json::object();

    /// Throws ContractViolation unless ||r||_p <= epsilon * (1 + 1e-6).
    void validate() const;
    static Perturbation zeros(const Shape& chw, NormType p, real epsilon);
};

void save_perturbation(const Perturbation& perturbation, const std::filesystem::path& path);

/// Re-validates the norm bound; a violating file is reported as DataError.
Perturbation load_perturbation(const std::filesystem::path& path);

struct EpochRecord {
    std::size_t epoch = 0;
    double loss = 0;
    double ce = 0;
    double fff_1 = 0;
    double fooling_rate = 0;

    friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct UapHistory {
    /// Row 0 is the untrained generator; rows 1..E hold epoch means.
    std::vector<EpochRecord> epochs;
    std::vector<loss::LossBreakdown> steps;
    bool aborted = false;
    std::string abort_reason;
};

struct UapOptions {
    /// Threads for the per-epoch fooling-rate evaluation.
    std::size_t jobs = 1;
    /// Treat the loss of this 1-based step as non-finite. Test hook for the
    /// abort path.
    std::optional<std::size_t> fault_step;
};

struct UapResult {
    Perturbation perturbation;
    UapHistory history;
};

/// Trains `generator` against the frozen `source` on `train`. The generator
/// input z is drawn once from config.seed and kept fixed. On a numeric
/// failure the generator is rolled back to its last good state and the
/// result is marked aborted.
UapResult train_uap(zoo::Model& generator, zoo::Model& source, const data::Dataset& train,
                    const AttackConfig& config, const UapOptions& options = {});

/// Generator output for the fixed z, projected onto the norm ball. Uses the
/// generator's current BN mode without updating its statistics.
Tensor generate_perturbation(const zoo::Model& generator, const Tensor& z, NormType p, real eps);

/// epoch,loss,ce,fff_1,fooling_rate
std::string history_csv(const UapHistory& history);

/// argmax T(clamp(x + r, 0, 1)) per image.
std::vector<int> load_uap_and_attack(const Perturbation& perturbation, const zoo::Model& target, const Tensor& batch);

/// Predictions of a frozen model on every image of `dataset` with `r` added.
std::vector<int> predict_perturbed(const zoo::Model& model, const data::Dataset& dataset, const Tensor& r,
                                   std::size_t jobs = 1, std::size_t batch_size = 256);

}  // namespace uapforge::attack
