#pragma once

#include <cstdint>
#include <vector>

#include "chunkforge/chunk.hpp"

namespace chunkforge {

/// Document-boundary metadata in the form variable-length attention kernels
/// consume. Every EOS belongs to the segment it terminates.
struct SegmentMeta {
    std::vector<std::uint32_t> cu_seqlens;  // 0 = b0 < b1 < ... < bn = L
    std::vector<std::uint32_t> segment_ids;  // per token
    std::uint32_t max_seqlen = 0;

    std::size_t length() const noexcept { return segment_ids.size(); }
    std::size_t segment_count() const noexcept { return cu_seqlens.empty() ? 0 : cu_seqlens.size() - 1; }
    friend bool operator==(const SegmentMeta&, const SegmentMeta&) = default;
};

enum class MaskMode { Causal, IntraDoc };

/// Throws InvariantError if the chunk's segments do not tile it.
SegmentMeta segment_metadata(const Chunk& chunk);

/// Builds metadata straight from boundaries; validates them.
SegmentMeta meta_from_boundaries(std::vector<std::uint32_t> cu_seqlens);

/// Checks the cu_seqlens / segment_ids / max_seqlen invariants.
void validate_meta(const SegmentMeta& meta);

/// Dense L x L attention-permission matrix (row = query, column = key).
/// Meant as a reference for small L.
class MaskMatrix {
public:
    explicit MaskMatrix(std::size_t n) : n_(n), bits_(n * n, 0) {}
    std::size_t size() const noexcept { return n_; }
    bool at(std::size_t i, std::size_t j) const { return bits_[i * n_ + j] != 0; }
    void set(std::size_t i, std::size_t j, bool v) { bits_[i * n_ + j] = v ? 1 : 0; }
    std::size_t count() const;
    friend bool operator==(const MaskMatrix&, const MaskMatrix&) = default;

private:
    std::size_t n_;
    std::vector<std::uint8_t> bits_;
};

MaskMatrix mask_matrix(const SegmentMeta& meta, MaskMode mode);

/// Whether position i's next-token prediction contributes to the loss.
std::vector<bool> loss_mask(const SegmentMeta& meta, MaskMode mode);

}  // namespace chunkforge
