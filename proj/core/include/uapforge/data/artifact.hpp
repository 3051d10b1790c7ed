#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uapforge/tensor/tensor.hpp"

namespace uapforge::data {

inline constexpr std::uint32_t kArtifactVersion = 1;

/// Named float tensors plus a JSON metadata document.
///
/// On-disk layout, little-endian throughout:
///   "UAPT" | u32 version | u32 tensor count | u64 payload checksum (FNV-1a)
///   per tensor: u32 name length | name | u32 rank | u64 dims[rank] | u64 payload offset
///   payload: f32 values of every tensor, in directory order
///   u32 metadata length | metadata JSON (UTF-8)
struct Artifact {
    std::vector<std::pair<std::string, BasicTensor<float>>> tensors;
    nlohmann::json metadata = nlohmann::json::object();

    const BasicTensor<float>& tensor(const std::string& name) const;
    bool has(const std::string& name) const;
    void add(std::string name, BasicTensor<float> value);
};

std::vector<std::uint8_t> encode_artifact(const Artifact& artifact);

/// Throws DataError on bad magic, unsupported version, bounds or checksum failures.
Artifact decode_artifact(std::span<const std::uint8_t> bytes);

void save_artifact(const Artifact& artifact, const std::filesystem::path& path);
Artifact load_artifact(const std::filesystem::path& path);

/// Stores a build-precision tensor as f32. Double values are narrowed, and a
/// one-time warning is printed to stderr when that loses information.
BasicTensor<float> to_storage(const Tensor& value);
Tensor from_storage(const BasicTensor<float>& value);

}  // namespace uapforge::data
