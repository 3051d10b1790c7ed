#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "uapforge/attack/attack_config.hpp"
#include "uapforge/data/dataset.hpp"

namespace uapforge::data {

struct DatasetConfig {
    DatasetFormat format = DatasetFormat::MnistIdx;
    /// Empty: $UAPFORGE_DATA_DIR/<mnist|cifar10>.
    std::string root;
    /// Per-class cap on classifier training images (0 keeps the full train split).
    std::size_t classifier_per_class = 0;
    std::size_t uap_train_per_class = 100;
    std::size_t tune_per_class = 50;
    /// Leading test images used for evaluation (0 keeps the full test split).
    std::size_t test_limit = 0;
    std::uint64_t split_seed = 7;

    std::filesystem::path resolved_root() const;
};

struct ClassifierConfig {
    std::string arch;
    std::size_t epochs = 3;
    std::size_t batch_size = 64;
    double lr = 1e-3;
    std::uint64_t seed = 1;
    /// Checkpoint to load (source for train-uap, target for eval).
    std::string checkpoint;
};

struct GeneratorConfig {
    std::string arch = "gen-r4";
    std::size_t width = 16;
};

struct ModelEntry {
    std::string arch;
    std::string checkpoint;
    std::string perturbation;
};

enum class Baseline { None, Random };

struct EvalConfig {
    std::string perturbation;
    Baseline baseline = Baseline::None;
    std::uint64_t baseline_seed = 0;
    std::vector<ModelEntry> models;
    std::vector<double> alphas{0.0, 0.6, 0.7, 0.8, 0.9, 1.0};
    std::size_t layers = 6;
    std::size_t ssim_images = 100;
    std::size_t dump_maps = 1;
    std::size_t jobs = 1;
};

struct RunConfig {
    DatasetConfig dataset;
    ClassifierConfig classifier;
    GeneratorConfig generator;
    AttackConfig attack;
    EvalConfig eval;

    /// Complete document with every default spelled out; parse_config_json of
    /// the result reproduces this config.
    nlohmann::json to_json() const;

    /// Short hex hash of the canonical JSON form.
    std::string hash() const;
};

/// Validates the document against the schema (unknown keys, types, ranges)
/// and fills defaults. Errors are ConfigError messages that start with the
/// offending dotted path.
RunConfig parse_config_json(const nlohmann::json& doc);
RunConfig parse_config(const std::filesystem::path& path);

/// Sets `doc[a][b]... = value` for a dotted key. The value is parsed as JSON
/// when possible and kept as a string otherwise.
void apply_override(nlohmann::json& doc, std::string_view dotted_key, std::string_view value);

}  // namespace uapforge::data
