#include "chunkforge/masking.hpp"

#include <algorithm>

#include <fmt/core.h>

namespace chunkforge {

SegmentMeta meta_from_boundaries(std::vector<std::uint32_t> cu_seqlens) {
    SegmentMeta meta;
    meta.cu_seqlens = std::move(cu_seqlens);
    if (meta.cu_seqlens.size() < 2 || meta.cu_seqlens.front() != 0) {
        throw InvariantError("cu_seqlens must start at 0 and hold at least two entries");
    }
    for (std::size_t i = 1; i < meta.cu_seqlens.size(); ++i) {
        if (meta.cu_seqlens[i] <= meta.cu_seqlens[i - 1]) {
            throw InvariantError(fmt::format("cu_seqlens not strictly increasing at index {}", i));
        }
    }
    meta.segment_ids.reserve(meta.cu_seqlens.back());
    for (std::uint32_t s = 0; s + 1 < meta.cu_seqlens.size(); ++s) {
        const std::uint32_t len = meta.cu_seqlens[s + 1] - meta.cu_seqlens[s];
        meta.segment_ids.insert(meta.segment_ids.end(), len, s);
        meta.max_seqlen = std::max(meta.max_seqlen, len);
    }
    return meta;
}

SegmentMeta segment_metadata(const Chunk& chunk) {
    if (chunk.segments.empty() || chunk.segments.front().start != 0) {
        throw InvariantError("chunk segments must start at position 0");
    }
    const auto length = static_cast<std::uint32_t>(chunk.tokens.size());
    std::vector<std::uint32_t> cu;
    cu.reserve(chunk.segments.size() + 1);
    for (std::size_t i = 0; i < chunk.segments.size(); ++i) {
        const auto& seg = chunk.segments[i];
        const std::uint32_t next_start = i + 1 < chunk.segments.size() ? chunk.segments[i + 1].start : length;
        // At most one separator token between a segment's end and the next boundary.
        if (seg.end <= seg.start || seg.end > next_start || next_start - seg.end > 1) {
            throw InvariantError(fmt::format("segment {} [{}, {}) does not tile the chunk", i, seg.start, seg.end));
        }
        cu.push_back(seg.start);
    }
    cu.push_back(length);
    return meta_from_boundaries(std::move(cu));
}

void validate_meta(const SegmentMeta& meta) {
    const SegmentMeta expected = meta_from_boundaries(meta.cu_seqlens);
    if (expected.segment_ids != meta.segment_ids) throw InvariantError("segment_ids disagree with cu_seqlens");
    if (expected.max_seqlen != meta.max_seqlen) {
        throw InvariantError(fmt::format("max_seqlen {} but largest segment is {}", meta.max_seqlen,
                                         expected.max_seqlen));
    }
}

std::size_t MaskMatrix::count() const { return static_cast<std::size_t>(std::ranges::count(bits_, 1)); }

MaskMatrix mask_matrix(const SegmentMeta& meta, MaskMode mode) {
    const std::size_t n = meta.length();
    MaskMatrix m(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t first = mode == MaskMode::Causal ? 0 : meta.cu_seqlens[meta.segment_ids[i]];
        for (std::size_t j = first; j <= i; ++j) m.set(i, j, true);
    }
    return m;
}

std::vector<bool> loss_mask(const SegmentMeta& meta, MaskMode mode) {
    const std::size_t n = meta.length();
    std::vector<bool> mask(n, false);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        mask[i] = mode == MaskMode::Causal || meta.segment_ids[i + 1] == meta.segment_ids[i];
    }
    return mask;
}

}  // namespace chunkforge
