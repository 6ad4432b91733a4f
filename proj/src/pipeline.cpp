#include "chunkforge/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

namespace chunkforge {

unsigned thread_budget() {
    if (const char* env = std::getenv("CHUNKFORGE_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) return static_cast<unsigned>(v);
        } catch (const std::exception&) {  // NOLINT(bugprone-empty-catch): fall through to the default
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

void record(PackSummary& summary, const Chunk& chunk) {
    ++summary.chunks;
    if (chunk.single_source()) {
        ++summary.chunks_by_source[chunk.segments.front().source_id];
    } else {
        ++summary.mixed_source_chunks;
    }
}

// Drains the streams on a small worker pool; each stream is owned by one worker.
std::map<SourceId, std::unique_ptr<ChunkStream>> materialize(std::map<SourceId, std::unique_ptr<ChunkStream>> streams,
                                                             unsigned threads) {
    std::vector<std::pair<SourceId, ChunkStream*>> work;
    for (auto& [id, s] : streams) work.emplace_back(id, s.get());
    std::vector<std::unique_ptr<ChunkStream>> done(work.size());
    std::atomic<std::size_t> cursor{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&] {
        for (std::size_t i = cursor++; i < work.size(); i = cursor++) {
            try {
                done[i] = std::make_unique<MaterializedStream>(*work[i].second);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const unsigned n = std::min<unsigned>(threads, static_cast<unsigned>(work.size()));
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);

    std::map<SourceId, std::unique_ptr<ChunkStream>> out;
    for (std::size_t i = 0; i < work.size(); ++i) out.emplace(work[i].first, std::move(done[i]));
    return out;
}

}  // namespace

PackSummary pack_corpus(std::vector<SourcePool>& pools, const PackingConfig& config,
                        std::shared_ptr<const StopwordSet> stopwords, const ChunkSink& sink, unsigned threads) {
    config.validate();
    PackSummary summary;

    if (config.strategy == Strategy::Mix) {
        std::vector<SourcePool*> ptrs;
        for (auto& p : pools) ptrs.push_back(&p);
        MixStream stream(std::move(ptrs), config);
        std::uint64_t in_batch = 0;
        while (auto chunk = stream.next()) {
            record(summary, *chunk);
            sink(*chunk);
            if (++in_batch == config.batch_size) {
                ++summary.batches;
                in_batch = 0;
            }
        }
        if (in_batch > 0) {
            ++summary.batches;
            summary.short_final_batch = true;
        }
        summary.tally = stream.tally();
        return summary;
    }

    std::map<SourceId, std::unique_ptr<ChunkStream>> streams;
    for (auto& pool : pools) {
        std::unique_ptr<ChunkStream> s;
        if (config.strategy == Strategy::Uni) {
            s = std::make_unique<UniStream>(pool, config);
        } else {
            s = std::make_unique<Bm25Stream>(pool, config, stopwords);
        }
        if (!streams.emplace(pool.source_id(), std::move(s)).second) {
            throw UsageError("two pools share a source id");
        }
    }
    if (threads > 1 && streams.size() > 1) streams = materialize(std::move(streams), threads);

    BatchComposer composer(std::move(streams), source_weights(pools), config.batch_size, composer_seed(config.seed));
    while (auto batch = composer.next_batch()) {
        ++summary.batches;
        summary.short_final_batch = batch->short_final;
        for (const auto& chunk : batch->chunks) {
            record(summary, chunk);
            sink(chunk);
        }
    }
    summary.tally = composer.tally();
    summary.retrieval = composer.retrieval_stats();
    return summary;
}

}  // namespace chunkforge
