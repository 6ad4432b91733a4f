#include "chunkforge/chunk.hpp"

#include <fmt/core.h>

namespace chunkforge {

bool Chunk::single_source() const noexcept {
    for (const auto& s : segments) {
        if (s.source_id != segments.front().source_id) return false;
    }
    return true;
}

void validate_chunk(const Chunk& chunk, std::size_t length, TokenId eos_id, Separator separator) {
    if (chunk.tokens.size() != length) {
        throw InvariantError(fmt::format("chunk has {} tokens, expected {}", chunk.tokens.size(), length));
    }
    if (chunk.segments.empty()) throw InvariantError("chunk has no segments");

    std::size_t expected_start = 0;
    for (std::size_t i = 0; i < chunk.segments.size(); ++i) {
        const auto& seg = chunk.segments[i];
        if (seg.start != expected_start) {
            throw InvariantError(fmt::format("segment {} starts at {}, expected {}", i, seg.start, expected_start));
        }
        if (seg.end <= seg.start || seg.end > length) {
            throw InvariantError(fmt::format("segment {} has invalid span [{}, {})", i, seg.start, seg.end));
        }
        for (std::uint32_t p = seg.start; p < seg.end; ++p) {
            if (chunk.tokens[p] == eos_id) {
                throw InvariantError(fmt::format("EOS inside segment {} at position {}", i, p));
            }
        }
        expected_start = seg.end;
        if (separator == Separator::Eos && seg.end < length) {
            if (chunk.tokens[seg.end] != eos_id) {
                throw InvariantError(fmt::format("segment {} is not followed by EOS at {}", i, seg.end));
            }
            expected_start = seg.end + 1;
        }
    }
    if (expected_start != length) {
        throw InvariantError(fmt::format("segments cover [0, {}) but chunk length is {}", expected_start, length));
    }
}

}  // namespace chunkforge
