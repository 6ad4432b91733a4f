#pragma once

#include <cstdint>
#include <vector>

#include "chunkforge/config.hpp"
#include "chunkforge/types.hpp"

namespace chunkforge {

/// Half-open span [start, end) of one document's tokens inside a chunk.
struct Segment {
    DocId doc_id = 0;
    SourceId source_id = 0;
    std::uint32_t start = 0;
    std::uint32_t end = 0;
    /// True when the span resumes a document split at the previous chunk's end.
    bool is_continuation = false;

    std::uint32_t length() const noexcept { return end - start; }
    friend bool operator==(const Segment&, const Segment&) = default;
};

/// A fixed-length packed training sequence.
struct Chunk {
    std::vector<TokenId> tokens;
    std::vector<Segment> segments;

    std::size_t length() const noexcept { return tokens.size(); }
    bool single_source() const noexcept;
    friend bool operator==(const Chunk&, const Chunk&) = default;
};

/// Checks length, segment tiling and EOS placement. Throws InvariantError.
///
/// With Separator::Eos every pair of adjacent segments is separated by exactly
/// one EOS, the last segment ends at L or at L-1 followed by EOS, and EOS
/// appears nowhere else. With Separator::None the segments tile [0, L) and no
/// EOS appears.
void validate_chunk(const Chunk& chunk, std::size_t length, TokenId eos_id, Separator separator = Separator::Eos);

}  // namespace chunkforge
