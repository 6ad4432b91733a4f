#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace chunkforge {

/// Stateless 64-bit finalizer (splitmix64). Stable across platforms.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Incremental FNV-1a over bytes. Used for fingerprints and id hashing where
/// the value is persisted, so std::hash is not an option.
class Fnv1a {
public:
    Fnv1a& update(std::string_view bytes) noexcept {
        for (unsigned char c : bytes) {
            state_ ^= c;
            state_ *= 0x100000001B3ULL;
        }
        return *this;
    }
    Fnv1a& update_u64(std::uint64_t v) noexcept {
        for (int i = 0; i < 8; ++i) {
            state_ ^= static_cast<unsigned char>(v >> (8 * i));
            state_ *= 0x100000001B3ULL;
        }
        return *this;
    }
    std::uint64_t digest() const noexcept { return state_; }

private:
    std::uint64_t state_ = 0xCBF29CE484222325ULL;
};

}  // namespace chunkforge
