#pragma once

#include <cstdint>
#include <random>

#include "chunkforge/hash.hpp"

namespace chunkforge {

/// Seeded generator with platform-stable helpers.
///
/// std::uniform_int_distribution is implementation-defined, and packed output
/// must be byte-identical for a given seed, so bounded draws are done here by
/// rejection on the raw 64-bit engine output.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_index(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform_real() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Derive an independent child seed, e.g. one per source stream.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
        return mix64(seed ^ mix64(stream + 0x5851F42D4C957F2DULL));
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace chunkforge
