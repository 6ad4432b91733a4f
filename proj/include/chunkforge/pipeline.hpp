#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "chunkforge/bm25.hpp"
#include "chunkforge/config.hpp"
#include "chunkforge/corpus.hpp"
#include "chunkforge/packing.hpp"

namespace chunkforge {

struct PackSummary {
    PackingTally tally;
    std::optional<RetrievalStats> retrieval;
    std::uint64_t chunks = 0;
    std::uint64_t batches = 0;
    bool short_final_batch = false;
    std::uint64_t mixed_source_chunks = 0;
    std::map<SourceId, std::uint64_t> chunks_by_source;  // single-source chunks only
};

using ChunkSink = std::function<void(const Chunk&)>;

/// Worker-thread budget: CHUNKFORGE_THREADS if set and positive, else the
/// hardware concurrency (at least 1).
unsigned thread_budget();

/// Packs every pool with the configured strategy and hands chunks to `sink`
/// in output order. For uni and bm25 the per-source streams may be computed on
/// up to `threads` workers; the batch composer merges them deterministically,
/// so output does not depend on the thread count. The pools are consumed.
PackSummary pack_corpus(std::vector<SourcePool>& pools, const PackingConfig& config,
                        std::shared_ptr<const StopwordSet> stopwords, const ChunkSink& sink, unsigned threads = 1);

}  // namespace chunkforge
