#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uapforge/data/dataset.hpp"
#include "uapforge/zoo/model.hpp"

namespace uapforge::similarity {

/// H x W map held in double.
using Map = BasicTensor<double>;

/// Channel-wise mean of one sample's activations (C x H x W).
Map mean_feature_map(const Tensor& activations);

struct SsimParams {
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    /// Dynamic range of the inputs.
    double range = 1.0;
};

struct SsimResult {
    double value = 0;
    /// The map was smaller than the window, so one global window was used.
    bool global_window = false;
};

/// Mean local SSIM over Gaussian-weighted windows placed wholly inside the
/// map. Maps smaller than the window in either axis are compared with a
/// single uniform window covering the whole map.
SsimResult ssim(const Map& a, const Map& b, const SsimParams& params = {});

/// Block means for integer downsampling factors, bilinear (half-pixel
/// centres) otherwise; a no-op for equal sizes.
Map resample_map(const Map& map, std::size_t height, std::size_t width);

/// Rescales to [0, 1]. A constant map becomes all zeros and sets `degenerate`.
Map normalize_minmax(const Map& map, bool* degenerate = nullptr);

struct SimilarityRow {
    std::string comparison_arch;
    std::size_t layer = 0;
    double ssim = 0;
    std::size_t n_images = 0;
    /// Share of images where either normalized map was constant.
    double degenerate_fraction = 0;
    bool global_window = false;

    friend bool operator==(const SimilarityRow&, const SimilarityRow&) = default;
};

struct SimilarityReport {
    std::string reference_arch;
    std::string dataset_fingerprint;
    std::vector<SimilarityRow> rows;

    /// Row for (comparison, layer); throws ContractViolation if absent.
    const SimilarityRow& at(const std::string& comparison, std::size_t layer) const;
    friend bool operator==(const SimilarityReport&, const SimilarityReport&) = default;
};

struct SimilarityOptions {
    /// 0 means every image of the dataset.
    std::size_t max_images = 0;
    std::size_t jobs = 1;
    std::size_t batch_size = 32;
    SsimParams ssim;
};

/// For every image and layer: mean maps of both models, min-max normalized,
/// resampled to the coarser grid, SSIM; then the per-image values averaged.
SimilarityReport layer_similarity_table(const zoo::Model& reference, const std::vector<const zoo::Model*>& comparisons,
                                        const data::Dataset& dataset, const std::vector<std::size_t>& layers,
                                        const SimilarityOptions& options = {});

/// reference_arch,comparison_arch,layer,ssim,n_images
std::string similarity_csv(const SimilarityReport& report);
nlohmann::json similarity_json(const SimilarityReport& report);

/// 8-bit binary PGM of a map rescaled to [0, 255].
void write_pgm(const Map& map, const std::filesystem::path& path);

}  // namespace uapforge::similarity
