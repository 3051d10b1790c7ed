#include "uapforge/data/dataset.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <unordered_set>

#include "uapforge/hash.hpp"
#include "uapforge/rng.hpp"

namespace uapforge::data {
namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset) {
    return (std::uint32_t(bytes[offset]) << 24) | (std::uint32_t(bytes[offset + 1]) << 16) |
           (std::uint32_t(bytes[offset + 2]) << 8) | std::uint32_t(bytes[offset + 3]);
}

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;
constexpr std::size_t kCifarRecord = 1 + 3 * 32 * 32;

}  // namespace

std::string_view to_string(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Tune: return "tune";
        case Split::Test: return "test";
    }
    return "?";
}

std::string_view to_string(DatasetFormat format) {
    return format == DatasetFormat::MnistIdx ? "mnist-idx" : "cifar10-binary";
}

DatasetFormat parse_format(std::string_view text) {
    if (text == "mnist-idx") return DatasetFormat::MnistIdx;
    if (text == "cifar10-binary") return DatasetFormat::Cifar10Binary;
    throw ConfigError("unknown dataset format '" + std::string(text) + "' (expected mnist-idx or cifar10-binary)");
}

Dataset::Dataset(std::string name, Split split, ImageShape shape, std::size_t num_classes,
                 std::vector<std::uint8_t> pixels, std::vector<int> labels)
    : name_(std::move(name)),
      split_(split),
      shape_(shape),
      num_classes_(num_classes),
      pixels_(std::move(pixels)),
      labels_(std::move(labels)) {
    if (shape_.pixels() == 0) throw DataError(name_ + ": empty image shape");
    if (pixels_.size() != labels_.size() * shape_.pixels()) {
        throw DataError(name_ + ": " + std::to_string(labels_.size()) + " labels but " +
                        std::to_string(pixels_.size()) + " pixel bytes");
    }
    for (int l : labels_) {
        if (l < 0 || std::size_t(l) >= num_classes_) {
            throw DataError(name_ + ": label " + std::to_string(l) + " outside 0.." + std::to_string(num_classes_ - 1));
        }
    }
    Fnv1a h;
    h.update_u64(shape_.channels);
    h.update_u64(shape_.height);
    h.update_u64(shape_.width);
    h.update_u64(num_classes_);
    h.update(pixels_);
    for (int l : labels_) h.update_u64(std::uint64_t(l));
    fingerprint_ = h.digest();
}

std::span<const std::uint8_t> Dataset::image_bytes(std::size_t i) const {
    return std::span(pixels_).subspan(i * shape_.pixels(), shape_.pixels());
}

Tensor Dataset::batch(std::span<const std::size_t> indices) const {
    const std::size_t px = shape_.pixels();
    Tensor out({indices.size(), shape_.channels, shape_.height, shape_.width});
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const auto bytes = image_bytes(indices[b]);
        real* dst = out.raw() + b * px;
        for (std::size_t k = 0; k < px; ++k) dst[k] = real(bytes[k]) / real(255);
    }
    return out;
}

Tensor Dataset::batch(std::size_t begin, std::size_t end) const {
    std::vector<std::size_t> idx(end - begin);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
    return batch(idx);
}

std::string Dataset::fingerprint_hex() const { return to_hex(fingerprint_); }

std::uint64_t Dataset::image_hash(std::size_t i) const {
    Fnv1a h;
    h.update(image_bytes(i));
    return h.digest();
}

Dataset Dataset::subset(std::span<const std::size_t> indices, Split split) const {
    std::vector<std::uint8_t> pixels;
    pixels.reserve(indices.size() * shape_.pixels());
    std::vector<int> labels;
    labels.reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= size()) throw ContractViolation("subset: index " + std::to_string(i) + " out of range");
        const auto bytes = image_bytes(i);
        pixels.insert(pixels.end(), bytes.begin(), bytes.end());
        labels.push_back(labels_[i]);
    }
    return Dataset(name_, split, shape_, num_classes_, std::move(pixels), std::move(labels));
}

Dataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels, Split split) {
    const auto img = read_file(images);
    const auto lab = read_file(labels);
    if (img.size() < 16) throw DataError(images.string() + ": truncated IDX header");
    if (lab.size() < 8) throw DataError(labels.string() + ": truncated IDX header");
    if (read_be32(img, 0) != kIdxImages) throw DataError(images.string() + ": bad IDX image magic");
    if (read_be32(lab, 0) != kIdxLabels) throw DataError(labels.string() + ": bad IDX label magic");
    const std::size_t count = read_be32(img, 4), rows = read_be32(img, 8), cols = read_be32(img, 12);
    if (read_be32(lab, 4) != count) throw DataError("IDX image and label counts differ");
    if (img.size() != 16 + count * rows * cols) throw DataError(images.string() + ": truncated IDX image payload");
    if (lab.size() != 8 + count) throw DataError(labels.string() + ": truncated IDX label payload");
    std::vector<int> ys(count);
    for (std::size_t i = 0; i < count; ++i) {
        ys[i] = lab[8 + i];
        if (ys[i] > 9) throw DataError(labels.string() + ": label " + std::to_string(ys[i]) + " out of range");
    }
    return Dataset("mnist", split, {1, rows, cols}, 10, std::vector<std::uint8_t>(img.begin() + 16, img.end()),
                   std::move(ys));
}

Dataset load_cifar10_binary(std::span<const std::filesystem::path> files, Split split) {
    std::vector<std::uint8_t> pixels;
    std::vector<int> labels;
    for (const auto& path : files) {
        const auto bytes = read_file(path);
        if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
            throw DataError(path.string() + ": size " + std::to_string(bytes.size()) + " is not a multiple of " +
                            std::to_string(kCifarRecord));
        }
        for (std::size_t off = 0; off < bytes.size(); off += kCifarRecord) {
            if (bytes[off] > 9) throw DataError(path.string() + ": label " + std::to_string(bytes[off]) + " out of range");
            labels.push_back(bytes[off]);
            pixels.insert(pixels.end(), bytes.begin() + off + 1, bytes.begin() + off + kCifarRecord);
        }
    }
    return Dataset("cifar10", split, {3, 32, 32}, 10, std::move(pixels), std::move(labels));
}

Dataset load_dataset(const std::filesystem::path& root, DatasetFormat format, Split split) {
    if (!std::filesystem::is_directory(root)) throw DataError("dataset directory not found: " + root.string());
    if (split == Split::Tune) throw ContractViolation("load_dataset: the tune split is carved from train");
    const bool train = split == Split::Train;
    if (format == DatasetFormat::MnistIdx) {
        const std::string prefix = train ? "train" : "t10k";
        return load_mnist_idx(root / (prefix + "-images-idx3-ubyte"), root / (prefix + "-labels-idx1-ubyte"), split);
    }
    std::vector<std::filesystem::path> files;
    if (train) {
        for (int i = 1; i <= 5; ++i) files.push_back(root / ("data_batch_" + std::to_string(i) + ".bin"));
    } else {
        files.push_back(root / "test_batch.bin");
    }
    return load_cifar10_binary(files, split);
}

std::filesystem::path default_data_root() {
    const char* env = std::getenv("UAPFORGE_DATA_DIR");
    return env && *env ? std::filesystem::path(env) : std::filesystem::path("data");
}

std::vector<std::size_t> balanced_indices(const Dataset& dataset, std::size_t per_class, std::uint64_t seed,
                                          std::span<const std::size_t> exclude) {
    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(std::span(order));
    const std::unordered_set<std::size_t> skip(exclude.begin(), exclude.end());
    std::vector<std::size_t> taken(dataset.num_classes(), 0);
    std::vector<std::size_t> out;
    for (std::size_t i : order) {
        if (skip.contains(i)) continue;
        auto& n = taken[std::size_t(dataset.label(i))];
        if (n < per_class) {
            ++n;
            out.push_back(i);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

AttackSplits make_attack_splits(const Dataset& train, std::size_t train_per_class, std::size_t tune_per_class,
                                std::uint64_t seed) {
    const auto train_idx = balanced_indices(train, train_per_class, seed);
    std::unordered_set<std::uint64_t> seen;
    for (std::size_t i : train_idx) seen.insert(train.image_hash(i));
    // Exclude the chosen indices plus any exact duplicates of them.
    std::vector<std::size_t> excluded = train_idx;
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (seen.contains(train.image_hash(i))) excluded.push_back(i);
    }
    const auto tune_idx = balanced_indices(train, tune_per_class, seed ^ 0x7475'6e65ULL, excluded);
    return {train.subset(train_idx, Split::Train), train.subset(tune_idx, Split::Tune)};
}

bool disjoint(const Dataset& a, const Dataset& b) {
    std::unordered_set<std::uint64_t> hashes;
    for (std::size_t i = 0; i < a.size(); ++i) hashes.insert(a.image_hash(i));
    for (std::size_t i = 0; i < b.size(); ++i) {
        if (hashes.contains(b.image_hash(i))) return false;
    }
    return true;
}

}  // namespace uapforge::data
