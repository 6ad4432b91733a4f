#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "chunkforge/chunk.hpp"
#include "chunkforge/config.hpp"
#include "chunkforge/masking.hpp"
#include "chunkforge/metrics.hpp"

namespace chunkforge {

/// Corrupt or truncated binary input; `offset` is the byte where decoding failed.
class FormatError : public Error {
public:
    FormatError(std::uint64_t offset, const std::string& what);
    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

inline constexpr std::array<char, 4> kDatasetMagic = {'C', 'F', 'C', 'K'};
inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::size_t kDatasetHeaderSize = 37;

/// Chunk dataset header. All integers little-endian:
///   magic[4] "CFCK" | version u32 | L u32 | chunk_count u64 | strategy u8 | seed u64 | tokenizer fingerprint u64
struct DatasetHeader {
    std::uint32_t version = kDatasetVersion;
    std::uint32_t length = 0;
    std::uint64_t chunk_count = 0;
    Strategy strategy = Strategy::Mix;
    std::uint64_t seed = 0;
    std::uint64_t tokenizer_fingerprint = 0;
    friend bool operator==(const DatasetHeader&, const DatasetHeader&) = default;
};

/// Streams chunk records to disk and patches chunk_count on finish().
///
/// Record layout: segment_count u16 | cu_seqlens (segment_count + 1) x u32 |
/// per segment { source_id u16, doc_id u64, is_continuation u8 } | tokens L x u32.
class DatasetWriter {
public:
    DatasetWriter(const std::string& path, DatasetHeader header);
    ~DatasetWriter();
    DatasetWriter(const DatasetWriter&) = delete;
    DatasetWriter& operator=(const DatasetWriter&) = delete;

    void write(const Chunk& chunk);
    /// Finalizes the header. Called by the destructor if not called explicitly.
    void finish();
    std::uint64_t written() const noexcept { return count_; }

private:
    std::string path_;
    std::ofstream out_;
    DatasetHeader header_;
    std::uint64_t count_ = 0;
    bool finished_ = false;
};

struct DecodedChunk {
    Chunk chunk;
    SegmentMeta meta;
};

/// Sequential reader. Segment spans are recovered from cu_seqlens by treating
/// a trailing `eos_id` token as the segment's separator.
class DatasetReader {
public:
    explicit DatasetReader(const std::string& path, TokenId eos_id = 0);

    const DatasetHeader& header() const noexcept { return header_; }
    /// Next record, or nullopt after chunk_count records (trailing bytes are an error).
    std::optional<DecodedChunk> next();
    std::uint64_t index() const noexcept { return index_; }
    std::uint64_t offset() const noexcept { return offset_; }

private:
    void read_exact(void* dst, std::size_t n, const char* what);

    std::string path_;
    std::ifstream in_;
    TokenId eos_id_;
    DatasetHeader header_;
    std::uint64_t index_ = 0;
    std::uint64_t offset_ = 0;
    std::uint64_t file_size_ = 0;
};

std::vector<std::uint8_t> encode_header(const DatasetHeader& header);
std::vector<std::uint8_t> encode_record(const Chunk& chunk);

/// Reads every record of a dataset.
std::vector<DecodedChunk> read_dataset(const std::string& path, TokenId eos_id = 0);

inline constexpr std::array<char, 4> kAttentionMagic = {'C', 'F', 'A', 'T'};
inline constexpr std::uint32_t kAttentionVersion = 1;

/// Attention dump: magic "CFAT" | version u32 | layers u32 | prefix_len u32 | positions u32,
/// then float32 rows a[l][p][i], i = 1..prefix_len+p, in (l, p) order.
struct AttentionFile {
    std::uint32_t layers = 0;
    std::uint32_t prefix_len = 0;
    std::uint32_t positions = 0;
    std::vector<AttentionRecord> records;
};

AttentionFile read_attention_file(const std::string& path);
void write_attention_file(const std::string& path, const AttentionFile& file);

}  // namespace chunkforge
