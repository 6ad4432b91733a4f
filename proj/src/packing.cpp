#include "chunkforge/packing.hpp"

#include <algorithm>

#include <fmt/core.h>

namespace chunkforge {

PackingTally& PackingTally::operator+=(const PackingTally& o) noexcept {
    chunks += o.chunks;
    docs_consumed += o.docs_consumed;
    doc_tokens += o.doc_tokens;
    eos_placed += o.eos_placed;
    dropped_tokens += o.dropped_tokens;
    emitted_tokens += o.emitted_tokens;
    return *this;
}

ChunkBuilder::ChunkBuilder(std::size_t length, TokenId eos_id, Separator separator, RemainderPolicy remainder)
    : length_(length), eos_id_(eos_id), separator_(separator), remainder_(remainder) {
    if (length_ < 2) throw UsageError(fmt::format("chunk length must be >= 2 (got {})", length_));
}

ChunkBuilder::ChunkBuilder(const PackingConfig& config)
    : ChunkBuilder(config.length, config.eos_id, config.separator, config.remainder) {}

void ChunkBuilder::place(Chunk& chunk, const Document& doc, std::size_t offset, bool continuation) {
    const std::size_t room = length_ - chunk.tokens.size();
    const std::size_t left = doc.tokens.size() - offset;
    const std::size_t take = std::min(room, left);
    const auto start = static_cast<std::uint32_t>(chunk.tokens.size());
    chunk.tokens.insert(chunk.tokens.end(), doc.tokens.begin() + static_cast<std::ptrdiff_t>(offset),
                        doc.tokens.begin() + static_cast<std::ptrdiff_t>(offset + take));
    chunk.segments.push_back(
        {doc.doc_id, doc.source_id, start, static_cast<std::uint32_t>(chunk.tokens.size()), continuation});

    if (take < left) {
        if (remainder_ == RemainderPolicy::Keep) {
            carry_doc_ = &doc;
            carry_offset_ = offset + take;
        } else {
            tally_.dropped_tokens += left - take;
        }
        return;
    }
    // Document finished. Its separator is dropped when the chunk is already full.
    if (separator_ == Separator::Eos && chunk.tokens.size() < length_) {
        chunk.tokens.push_back(eos_id_);
        ++tally_.eos_placed;
    }
}

std::optional<Chunk> ChunkBuilder::build(const DocSupplier& next) {
    if (exhausted_) return std::nullopt;
    Chunk chunk;
    chunk.tokens.reserve(length_);

    if (carry_doc_ != nullptr) {
        const Document* doc = carry_doc_;
        const std::size_t offset = carry_offset_;
        carry_doc_ = nullptr;
        carry_offset_ = 0;
        place(chunk, *doc, offset, true);
    }
    while (chunk.tokens.size() < length_) {
        const Document* doc = next();
        if (doc == nullptr) {
            tally_.dropped_tokens += chunk.tokens.size();
            exhausted_ = true;
            return std::nullopt;
        }
        ++tally_.docs_consumed;
        tally_.doc_tokens += doc->tokens.size();
        place(chunk, *doc, 0, false);
    }
    ++tally_.chunks;
    tally_.emitted_tokens += chunk.tokens.size();
    return chunk;
}

std::uint64_t stream_seed(std::uint64_t seed, SourceId source) { return Rng::derive(seed, source); }
std::uint64_t composer_seed(std::uint64_t seed) { return Rng::derive(seed, 0xC0FFEEULL << 16); }

MixStream::MixStream(std::vector<SourcePool*> pools, const PackingConfig& config)
    : pools_(std::move(pools)), rng_(config.seed), builder_(config) {}

std::optional<Chunk> MixStream::next() {
    return builder_.build([this] { return draw_uniform(std::span<SourcePool* const>(pools_), rng_); });
}

UniStream::UniStream(SourcePool& pool, const PackingConfig& config)
    : pool_(&pool), rng_(stream_seed(config.seed, pool.source_id())), builder_(config) {}

std::optional<Chunk> UniStream::next() {
    return builder_.build([this] { return pool_->draw_uniform(rng_); });
}

RetrievalStats& RetrievalStats::operator+=(const RetrievalStats& o) noexcept {
    calls += o.calls;
    touched_total += o.touched_total;
    touched_max = std::max(touched_max, o.touched_max);
    bound_ratio_max = std::max(bound_ratio_max, o.bound_ratio_max);
    bound_violated = bound_violated || o.bound_violated;
    return *this;
}

MaterializedStream::MaterializedStream(ChunkStream& source) {
    while (auto chunk = source.next()) chunks_.push_back(std::move(*chunk));
    tally_ = source.tally();
    stats_ = source.retrieval_stats();
}

std::optional<Chunk> MaterializedStream::next() {
    if (cursor_ >= chunks_.size()) return std::nullopt;
    return std::move(chunks_[cursor_++]);
}

BatchComposer::BatchComposer(std::map<SourceId, std::unique_ptr<ChunkStream>> streams,
                             const std::map<SourceId, double>& weights, std::size_t batch_size, std::uint64_t seed)
    : batch_size_(batch_size), rng_(seed) {
    if (batch_size_ < 1) throw UsageError("batch size must be >= 1");
    for (auto& [source, stream] : streams) {
        auto w = weights.find(source);
        if (w == weights.end()) throw UsageError(fmt::format("no weight for source {}", source));
        if (!(w->second >= 0.0)) throw UsageError(fmt::format("negative weight for source {}", source));
        entries_.push_back({source, w->second, std::move(stream)});
    }
}

std::optional<Batch> BatchComposer::next_batch() {
    Batch batch;
    while (batch.chunks.size() < batch_size_) {
        double total = 0.0;
        for (const auto& e : entries_) {
            if (e.active) total += e.weight;
        }
        if (!(total > 0.0)) break;

        const double u = rng_.uniform_real() * total;
        Entry* chosen = nullptr;
        double acc = 0.0;
        for (auto& e : entries_) {
            if (!e.active || e.weight <= 0.0) continue;
            chosen = &e;  // the last active entry absorbs rounding at the top end
            acc += e.weight;
            if (u < acc) break;
        }
        if (auto chunk = chosen->stream->next()) {
            batch.chunks.push_back(std::move(*chunk));
            batch.sources.push_back(chosen->source);
        } else {
            chosen->active = false;
        }
    }
    if (batch.chunks.empty()) return std::nullopt;
    batch.short_final = batch.chunks.size() < batch_size_;
    return batch;
}

PackingTally BatchComposer::tally() const {
    PackingTally t;
    for (const auto& e : entries_) t += e.stream->tally();
    return t;
}

std::optional<RetrievalStats> BatchComposer::retrieval_stats() const {
    std::optional<RetrievalStats> total;
    for (const auto& e : entries_) {
        if (auto s = e.stream->retrieval_stats()) {
            if (!total) total.emplace();
            *total += *s;
        }
    }
    return total;
}

}  // namespace chunkforge
