#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "chunkforge/chunk.hpp"
#include "chunkforge/config.hpp"
#include "chunkforge/corpus.hpp"
#include "chunkforge/rng.hpp"

namespace chunkforge {

/// Token accounting for one packing stream.
///
/// For a finished stream: emitted_tokens == doc_tokens + eos_placed - dropped_tokens.
/// `dropped_tokens` covers the discarded final partial chunk and, under
/// RemainderPolicy::Drop, the discarded suffixes of split documents.
struct PackingTally {
    std::uint64_t chunks = 0;
    std::uint64_t docs_consumed = 0;
    std::uint64_t doc_tokens = 0;
    std::uint64_t eos_placed = 0;
    std::uint64_t dropped_tokens = 0;
    std::uint64_t emitted_tokens = 0;

    bool conserved() const noexcept { return emitted_tokens + dropped_tokens == doc_tokens + eos_placed; }
    PackingTally& operator+=(const PackingTally& o) noexcept;
};

/// Pull-based document supplier; returns nullptr when the stream is exhausted.
using DocSupplier = std::function<const Document*()>;

/// Builds consecutive fixed-length chunks of one stream:
/// carry, EOS, d1, EOS, d2, ... with the last document split at L.
///
/// The next document is only pulled while the chunk still has room. A
/// document ending exactly at L gets no trailing EOS. When the supplier runs
/// dry mid-chunk the partial chunk is discarded and counted as dropped.
class ChunkBuilder {
public:
    ChunkBuilder(std::size_t length, TokenId eos_id, Separator separator = Separator::Eos,
                 RemainderPolicy remainder = RemainderPolicy::Keep);
    explicit ChunkBuilder(const PackingConfig& config);

    std::optional<Chunk> build(const DocSupplier& next);

    /// Document whose suffix will open the next chunk, if any.
    const Document* carry_document() const noexcept { return carry_doc_; }
    std::size_t carry_offset() const noexcept { return carry_offset_; }
    bool exhausted() const noexcept { return exhausted_; }
    const PackingTally& tally() const noexcept { return tally_; }

private:
    void place(Chunk& chunk, const Document& doc, std::size_t offset, bool continuation);

    std::size_t length_;
    TokenId eos_id_;
    Separator separator_;
    RemainderPolicy remainder_;
    const Document* carry_doc_ = nullptr;
    std::size_t carry_offset_ = 0;
    bool exhausted_ = false;
    PackingTally tally_;
};

/// Touched-postings instrumentation of a retrieval stream.
struct RetrievalStats {
    std::uint64_t calls = 0;
    std::uint64_t touched_total = 0;
    std::uint64_t touched_max = 0;
    /// Largest touched / (|query terms| * k) seen; the bound holds iff <= 1.
    double bound_ratio_max = 0.0;
    bool bound_violated = false;

    RetrievalStats& operator+=(const RetrievalStats& o) noexcept;
};

class ChunkStream {
public:
    ChunkStream() = default;
    ChunkStream(const ChunkStream&) = delete;
    ChunkStream& operator=(const ChunkStream&) = delete;
    virtual ~ChunkStream() = default;
    /// Next chunk, or nullopt at end of stream.
    virtual std::optional<Chunk> next() = 0;
    virtual PackingTally tally() const = 0;
    virtual std::optional<RetrievalStats> retrieval_stats() const { return std::nullopt; }
};

/// Uniform sampling over the union of all pools.
class MixStream final : public ChunkStream {
public:
    MixStream(std::vector<SourcePool*> pools, const PackingConfig& config);
    std::optional<Chunk> next() override;
    PackingTally tally() const override { return builder_.tally(); }

private:
    std::vector<SourcePool*> pools_;
    Rng rng_;
    ChunkBuilder builder_;
};

/// Uniform sampling within a single source; its carry never leaves the source.
class UniStream final : public ChunkStream {
public:
    UniStream(SourcePool& pool, const PackingConfig& config);
    std::optional<Chunk> next() override;
    PackingTally tally() const override { return builder_.tally(); }

private:
    SourcePool* pool_;
    Rng rng_;
    ChunkBuilder builder_;
};

/// A stream whose chunks were produced ahead of time, e.g. on a worker thread.
class MaterializedStream final : public ChunkStream {
public:
    /// Drains `source` completely.
    explicit MaterializedStream(ChunkStream& source);
    std::optional<Chunk> next() override;
    PackingTally tally() const override { return tally_; }
    std::optional<RetrievalStats> retrieval_stats() const override { return stats_; }

private:
    std::vector<Chunk> chunks_;
    std::size_t cursor_ = 0;
    PackingTally tally_;
    std::optional<RetrievalStats> stats_;
};

struct Batch {
    std::vector<Chunk> chunks;
    std::vector<SourceId> sources;  // stream each chunk was drawn from
    bool short_final = false;       // fewer than batch_size chunks: every stream ran out
};

/// Merges per-source streams into batches. Each slot picks its source
/// categorically by weight; exhausted sources drop out and the remaining
/// weights are renormalized implicitly.
class BatchComposer {
public:
    BatchComposer(std::map<SourceId, std::unique_ptr<ChunkStream>> streams, const std::map<SourceId, double>& weights,
                  std::size_t batch_size, std::uint64_t seed);

    std::optional<Batch> next_batch();
    PackingTally tally() const;
    std::optional<RetrievalStats> retrieval_stats() const;

private:
    struct Entry {
        SourceId source;
        double weight;
        std::unique_ptr<ChunkStream> stream;
        bool active = true;
    };
    std::vector<Entry> entries_;
    std::size_t batch_size_;
    Rng rng_;
};

/// Seed for the stream of one source, derived from the run seed.
std::uint64_t stream_seed(std::uint64_t seed, SourceId source);
/// Seed for the batch composer.
std::uint64_t composer_seed(std::uint64_t seed);

}  // namespace chunkforge
