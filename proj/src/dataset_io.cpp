#include "chunkforge/dataset_io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>

#include <fmt/core.h>

namespace chunkforge {

FormatError::FormatError(std::uint64_t offset, const std::string& what)
    : Error(fmt::format("byte offset {}: {}", offset, what)), offset_(offset) {}

namespace {

class ByteWriter {
public:
    explicit ByteWriter(std::vector<std::uint8_t>& out) : out_(out) {}
    template <typename T>
    void put(T v) {
        using U = std::make_unsigned_t<T>;
        auto u = static_cast<U>(v);
        for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
    }
    void bytes(const char* p, std::size_t n) { out_.insert(out_.end(), p, p + n); }

private:
    std::vector<std::uint8_t>& out_;
};

template <typename T>
T get_le(const std::uint8_t* p) {
    using U = std::make_unsigned_t<T>;
    U v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<U>(static_cast<U>(p[i]) << (8 * i));
    return static_cast<T>(v);
}

}  // namespace

std::vector<std::uint8_t> encode_header(const DatasetHeader& header) {
    std::vector<std::uint8_t> out;
    out.reserve(kDatasetHeaderSize);
    ByteWriter w(out);
    w.bytes(kDatasetMagic.data(), kDatasetMagic.size());
    w.put<std::uint32_t>(header.version);
    w.put<std::uint32_t>(header.length);
    w.put<std::uint64_t>(header.chunk_count);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(header.strategy));
    w.put<std::uint64_t>(header.seed);
    w.put<std::uint64_t>(header.tokenizer_fingerprint);
    return out;
}

std::vector<std::uint8_t> encode_record(const Chunk& chunk) {
    const SegmentMeta meta = segment_metadata(chunk);
    if (chunk.segments.size() > UINT16_MAX) {
        throw Error(fmt::format("chunk has {} segments; the format allows {}", chunk.segments.size(), UINT16_MAX));
    }
    std::vector<std::uint8_t> out;
    out.reserve(2 + 4 * meta.cu_seqlens.size() + 11 * chunk.segments.size() + 4 * chunk.tokens.size());
    ByteWriter w(out);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(chunk.segments.size()));
    for (auto b : meta.cu_seqlens) w.put<std::uint32_t>(b);
    for (const auto& s : chunk.segments) {
        w.put<std::uint16_t>(s.source_id);
        w.put<std::uint64_t>(s.doc_id);
        w.put<std::uint8_t>(s.is_continuation ? 1 : 0);
    }
    for (auto t : chunk.tokens) w.put<std::uint32_t>(t);
    return out;
}

DatasetWriter::DatasetWriter(const std::string& path, DatasetHeader header)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc), header_(header) {
    if (!out_) throw IoError(path, "cannot open output file");
    header_.chunk_count = 0;
    const auto bytes = encode_header(header_);
    out_.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

DatasetWriter::~DatasetWriter() {
    try {
        finish();
    } catch (...) {  // NOLINT(bugprone-empty-catch): destructor must not throw
    }
}

void DatasetWriter::write(const Chunk& chunk) {
    if (finished_) throw Error("dataset writer already finished");
    if (chunk.tokens.size() != header_.length) {
        throw InvariantError(fmt::format("chunk of {} tokens written to an L={} dataset", chunk.tokens.size(),
                                         header_.length));
    }
    const auto bytes = encode_record(chunk);
    out_.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out_) throw IoError(path_, "write failed");
    ++count_;
}

void DatasetWriter::finish() {
    if (finished_) return;
    finished_ = true;
    header_.chunk_count = count_;
    const auto bytes = encode_header(header_);
    out_.seekp(0);
    out_.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out_.close();
    if (!out_) throw IoError(path_, "failed to finalize dataset");
}

DatasetReader::DatasetReader(const std::string& path, TokenId eos_id)
    : path_(path), in_(path, std::ios::binary), eos_id_(eos_id) {
    if (!in_) throw IoError(path, "cannot open dataset");
    file_size_ = std::filesystem::file_size(path);
    std::array<std::uint8_t, kDatasetHeaderSize> raw{};
    read_exact(raw.data(), raw.size(), "header");
    if (std::memcmp(raw.data(), kDatasetMagic.data(), 4) != 0) {
        throw FormatError(0, fmt::format("bad magic {:02x} {:02x} {:02x} {:02x} (expected \"CFCK\")", raw[0], raw[1],
                                         raw[2], raw[3]));
    }
    header_.version = get_le<std::uint32_t>(raw.data() + 4);
    if (header_.version != kDatasetVersion) {
        throw FormatError(4, fmt::format("unsupported version {} (expected {})", header_.version, kDatasetVersion));
    }
    header_.length = get_le<std::uint32_t>(raw.data() + 8);
    header_.chunk_count = get_le<std::uint64_t>(raw.data() + 12);
    const auto tag = raw[20];
    if (tag > 2) throw FormatError(20, fmt::format("unknown strategy tag {}", tag));
    header_.strategy = static_cast<Strategy>(tag);
    header_.seed = get_le<std::uint64_t>(raw.data() + 21);
    header_.tokenizer_fingerprint = get_le<std::uint64_t>(raw.data() + 29);
    if (header_.length < 2) throw FormatError(8, fmt::format("invalid chunk length {}", header_.length));
}

void DatasetReader::read_exact(void* dst, std::size_t n, const char* what) {
    if (offset_ + n > file_size_) {
        throw FormatError(offset_, fmt::format("truncated {} (need {} bytes, {} left)", what, n, file_size_ - offset_));
    }
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!in_) throw FormatError(offset_, fmt::format("read error in {}", what));
    offset_ += n;
}

std::optional<DecodedChunk> DatasetReader::next() {
    if (index_ >= header_.chunk_count) {
        if (offset_ != file_size_) {
            throw FormatError(offset_, fmt::format("{} trailing bytes after {} records", file_size_ - offset_,
                                                   header_.chunk_count));
        }
        return std::nullopt;
    }
    const std::uint64_t record_start = offset_;
    const std::uint32_t length = header_.length;

    std::uint8_t u16[2];
    read_exact(u16, 2, "segment count");
    const auto nseg = get_le<std::uint16_t>(u16);
    if (nseg == 0 || nseg > length) {
        throw FormatError(record_start, fmt::format("chunk {}: invalid segment count {}", index_, nseg));
    }

    std::vector<std::uint8_t> buf(4 * (nseg + 1));
    const std::uint64_t cu_offset = offset_;
    read_exact(buf.data(), buf.size(), "cu_seqlens");
    std::vector<std::uint32_t> cu(nseg + 1);
    for (std::size_t i = 0; i <= nseg; ++i) cu[i] = get_le<std::uint32_t>(buf.data() + 4 * i);
    if (cu.front() != 0 || cu.back() != length) {
        throw FormatError(cu_offset, fmt::format("chunk {}: cu_seqlens must run from 0 to {}", index_, length));
    }
    for (std::size_t i = 1; i <= nseg; ++i) {
        if (cu[i] <= cu[i - 1]) {
            throw FormatError(cu_offset + 4 * i, fmt::format("chunk {}: cu_seqlens not increasing", index_));
        }
    }

    DecodedChunk out;
    buf.resize(11 * static_cast<std::size_t>(nseg));
    read_exact(buf.data(), buf.size(), "segment table");
    out.chunk.segments.resize(nseg);
    for (std::size_t i = 0; i < nseg; ++i) {
        const std::uint8_t* p = buf.data() + 11 * i;
        auto& s = out.chunk.segments[i];
        s.source_id = get_le<std::uint16_t>(p);
        s.doc_id = get_le<std::uint64_t>(p + 2);
        if (p[10] > 1) throw FormatError(offset_ - buf.size() + 11 * i + 10, "continuation flag is not 0 or 1");
        s.is_continuation = p[10] == 1;
    }

    const std::uint64_t token_offset = offset_;
    buf.resize(4 * static_cast<std::size_t>(length));
    read_exact(buf.data(), buf.size(), "tokens");
    out.chunk.tokens.resize(length);
    for (std::size_t i = 0; i < length; ++i) out.chunk.tokens[i] = get_le<std::uint32_t>(buf.data() + 4 * i);

    for (std::size_t i = 0; i < nseg; ++i) {
        auto& s = out.chunk.segments[i];
        s.start = cu[i];
        s.end = cu[i + 1];
        if (out.chunk.tokens[s.end - 1] == eos_id_) --s.end;
        if (s.end == s.start) {
            throw FormatError(token_offset + 4ULL * s.start, fmt::format("chunk {}: segment {} is empty", index_, i));
        }
        for (std::uint32_t p = s.start; p < s.end; ++p) {
            if (out.chunk.tokens[p] == eos_id_) {
                throw FormatError(token_offset + 4ULL * p,
                                  fmt::format("chunk {}: EOS inside segment {} at position {}", index_, i, p));
            }
        }
    }
    out.meta = meta_from_boundaries(std::move(cu));
    ++index_;
    return out;
}

std::vector<DecodedChunk> read_dataset(const std::string& path, TokenId eos_id) {
    DatasetReader reader(path, eos_id);
    std::vector<DecodedChunk> out;
    out.reserve(reader.header().chunk_count);
    while (auto c = reader.next()) out.push_back(std::move(*c));
    return out;
}

AttentionFile read_attention_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path, "cannot open attention file");
    const std::uint64_t size = std::filesystem::file_size(path);
    std::array<std::uint8_t, 20> raw{};
    if (size < raw.size()) throw FormatError(0, "attention file shorter than its header");
    in.read(reinterpret_cast<char*>(raw.data()), raw.size());
    if (std::memcmp(raw.data(), kAttentionMagic.data(), 4) != 0) throw FormatError(0, "bad magic (expected \"CFAT\")");
    const auto version = get_le<std::uint32_t>(raw.data() + 4);
    if (version != kAttentionVersion) throw FormatError(4, fmt::format("unsupported version {}", version));

    AttentionFile file;
    file.layers = get_le<std::uint32_t>(raw.data() + 8);
    file.prefix_len = get_le<std::uint32_t>(raw.data() + 12);
    file.positions = get_le<std::uint32_t>(raw.data() + 16);
    // Each layer holds sum_{p=1..P} (prefix + p) floats.
    const std::uint64_t per_layer = static_cast<std::uint64_t>(file.positions) * file.prefix_len +
                                    static_cast<std::uint64_t>(file.positions) * (file.positions + 1) / 2;
    const std::uint64_t expected = raw.size() + 4 * per_layer * file.layers;
    if (size != expected) {
        throw FormatError(std::min(size, expected),
                          fmt::format("attention file is {} bytes, header implies {}", size, expected));
    }
    std::vector<std::uint8_t> row;
    for (std::uint32_t l = 0; l < file.layers; ++l) {
        for (std::uint32_t p = 1; p <= file.positions; ++p) {
            AttentionRecord rec;
            rec.layer = l;
            rec.position = p;
            rec.prefix_len = file.prefix_len;
            const std::size_t n = static_cast<std::size_t>(file.prefix_len) + p;
            row.resize(4 * n);
            in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
            rec.scores.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                rec.scores[i] = static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(row.data() + 4 * i)));
            }
            file.records.push_back(std::move(rec));
        }
    }
    return file;
}

void write_attention_file(const std::string& path, const AttentionFile& file) {
    std::vector<std::uint8_t> out;
    ByteWriter w(out);
    w.bytes(kAttentionMagic.data(), kAttentionMagic.size());
    w.put<std::uint32_t>(kAttentionVersion);
    w.put<std::uint32_t>(file.layers);
    w.put<std::uint32_t>(file.prefix_len);
    w.put<std::uint32_t>(file.positions);
    if (file.records.size() != static_cast<std::size_t>(file.layers) * file.positions) {
        throw Error("attention records do not match layers x positions");
    }
    for (std::size_t i = 0; i < file.records.size(); ++i) {
        const auto& rec = file.records[i];
        const auto layer = static_cast<std::uint32_t>(i / file.positions);
        const auto position = static_cast<std::uint32_t>(i % file.positions + 1);
        if (rec.layer != layer || rec.position != position || rec.prefix_len != file.prefix_len) {
            throw Error(fmt::format("attention record {} is (layer {}, position {}), expected ({}, {})", i, rec.layer,
                                    rec.position, layer, position));
        }
        if (rec.scores.size() != static_cast<std::size_t>(file.prefix_len) + rec.position) {
            throw Error(fmt::format("attention row (layer {}, position {}) has the wrong width", rec.layer,
                                    rec.position));
        }
        for (double v : rec.scores) w.put<std::uint32_t>(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError(path, "cannot open output file");
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError(path, "write failed");
}

}  // namespace chunkforge
