#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "uapforge/data/dataset.hpp"
#include "uapforge/rng.hpp"

namespace uapforge::fixtures {

inline Tensor random_batch(Shape shape, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t(std::move(shape));
    for (real& v : t.data()) v = real(rng.uniform());
    return t;
}

/// Class k lights up row pair k of an 8x8 image; noise elsewhere.
inline data::Dataset stripes(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::uint8_t> px(n * 64);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = int(i % 4);
        for (std::size_t p = 0; p < 64; ++p) px[i * 64 + p] = std::uint8_t(rng.below(60));
        for (std::size_t c = 0; c < 8; ++c) px[i * 64 + std::size_t(labels[i]) * 16 + c] = 230;
    }
    return data::Dataset("stripes", data::Split::Train, {1, 8, 8}, 4, std::move(px), std::move(labels));
}

/// Writes an MNIST-layout directory (IDX files, standard names) of 16x16
/// images in 10 classes: class k brightens row k + 3.
inline void write_idx_dataset(const std::filesystem::path& dir, std::size_t train_n, std::size_t test_n,
                              std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    auto be32 = [](std::vector<std::uint8_t>& out, std::uint32_t v) {
        for (int shift = 24; shift >= 0; shift -= 8) out.push_back(std::uint8_t(v >> shift));
    };
    auto dump = [](const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    };
    Rng rng(seed);
    auto split = [&](const char* images, const char* labels, std::size_t n) {
        std::vector<std::uint8_t> img, lab;
        be32(img, 0x00000803);
        be32(img, std::uint32_t(n));
        be32(img, 16);
        be32(img, 16);
        be32(lab, 0x00000801);
        be32(lab, std::uint32_t(n));
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t k = i % 10;
            lab.push_back(std::uint8_t(k));
            for (std::size_t p = 0; p < 256; ++p) {
                const bool lit = p / 16 == k + 3 && p % 16 >= 2 && p % 16 < 14;
                img.push_back(std::uint8_t(lit ? 200 + rng.below(50) : rng.below(60)));
            }
        }
        dump(dir / images, img);
        dump(dir / labels, lab);
    };
    split("train-images-idx3-ubyte", "train-labels-idx1-ubyte", train_n);
    split("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", test_n);
}

}  // namespace uapforge::fixtures
