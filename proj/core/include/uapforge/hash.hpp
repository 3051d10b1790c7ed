#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace uapforge {

/// 64-bit FNV-1a, used for content fingerprints and artifact checksums.
class Fnv1a {
public:
    void update(std::span<const std::uint8_t> bytes) {
        for (std::uint8_t b : bytes) {
            state_ ^= b;
            state_ *= 0x100000001b3ULL;
        }
    }
    void update(std::string_view text) {
        update(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    }
    void update_u64(std::uint64_t v) {
        std::uint8_t bytes[8];
        for (int i = 0; i < 8; ++i) bytes[i] = static_cast<std::uint8_t>(v >> (8 * i));
        update(bytes);
    }
    std::uint64_t digest() const { return state_; }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string to_hex(std::uint64_t value);

}  // namespace uapforge
