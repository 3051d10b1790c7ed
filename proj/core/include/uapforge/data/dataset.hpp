#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uapforge/tensor/tensor.hpp"

namespace uapforge::data {

enum class Split { Train, Tune, Test };
enum class DatasetFormat { MnistIdx, Cifar10Binary };

std::string_view to_string(Split split);
std::string_view to_string(DatasetFormat format);
DatasetFormat parse_format(std::string_view text);

struct ImageShape {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t pixels() const { return channels * height * width; }
    Shape as_shape() const { return {channels, height, width}; }
    friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

/// Decoded images kept as bytes; batches are materialized as N x C x H x W
/// tensors scaled to [0, 1]. Labels are 0-based class indices.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::string name, Split split, ImageShape shape, std::size_t num_classes, std::vector<std::uint8_t> pixels,
            std::vector<int> labels);

    const std::string& name() const { return name_; }
    Split split() const { return split_; }
    const ImageShape& image_shape() const { return shape_; }
    std::size_t num_classes() const { return num_classes_; }
    std::size_t size() const { return labels_.size(); }
    bool empty() const { return labels_.empty(); }

    int label(std::size_t i) const { return labels_[i]; }
    std::span<const int> labels() const { return labels_; }
    std::span<const std::uint8_t> image_bytes(std::size_t i) const;

    Tensor batch(std::span<const std::size_t> indices) const;
    Tensor batch(std::size_t begin, std::size_t end) const;

    /// Content hash over image shape, class count, pixels and labels.
    std::uint64_t fingerprint() const { return fingerprint_; }
    std::string fingerprint_hex() const;
    std::uint64_t image_hash(std::size_t i) const;

    Dataset subset(std::span<const std::size_t> indices, Split split) const;

private:
    std::string name_;
    Split split_ = Split::Train;
    ImageShape shape_;
    std::size_t num_classes_ = 0;
    std::vector<std::uint8_t> pixels_;
    std::vector<int> labels_;
    std::uint64_t fingerprint_ = 0;
};

/// Decodes an IDX image/label file pair (magics 0x00000803 / 0x00000801).
Dataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels, Split split);

/// Decodes CIFAR-10 binary batches: records of 1 label byte + 3072 pixel bytes.
Dataset load_cifar10_binary(std::span<const std::filesystem::path> files, Split split);

/// Loads the train or test split from a dataset directory using the standard
/// file names (train-images-idx3-ubyte, ..., data_batch_1.bin, test_batch.bin).
Dataset load_dataset(const std::filesystem::path& root, DatasetFormat format, Split split);

/// $UAPFORGE_DATA_DIR, or "data" when unset.
std::filesystem::path default_data_root();

/// Up to `per_class` indices of each class in a seeded random order, skipping
/// indices listed in `exclude`. Result is sorted.
std::vector<std::size_t> balanced_indices(const Dataset& dataset, std::size_t per_class, std::uint64_t seed,
                                          std::span<const std::size_t> exclude = {});

struct AttackSplits {
    Dataset train;
    Dataset tune;
};

/// Class-balanced UAP-training and tuning subsets of a train split. No image
/// (by content hash) lands in both.
AttackSplits make_attack_splits(const Dataset& train, std::size_t train_per_class, std::size_t tune_per_class,
                                std::uint64_t seed);

/// True when no image content hash appears in both datasets.
bool disjoint(const Dataset& a, const Dataset& b);

}  // namespace uapforge::data
