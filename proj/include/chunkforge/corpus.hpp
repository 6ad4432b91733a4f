#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "chunkforge/rng.hpp"
#include "chunkforge/tokenizer.hpp"
#include "chunkforge/types.hpp"

namespace chunkforge {

/// One tokenized document. Never contains the EOS id and is never empty.
struct Document {
    DocId doc_id = 0;
    SourceId source_id = 0;
    std::vector<TokenId> tokens;

    std::size_t token_count() const noexcept { return tokens.size(); }
};

/// A malformed input record; carries the file and 1-based line number.
class IngestError : public Error {
public:
    IngestError(const std::string& path, std::size_t line, const std::string& what);
    const std::string& path() const noexcept { return path_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string path_;
    std::size_t line_;
};

/// Documents of one source corpus with without-replacement sampling state.
///
/// Sampling mutates the pool, so a pool belongs to exactly one packing stream.
/// Document addresses are stable for the pool's lifetime (including moves),
/// which lets chunk builders hold `const Document*`.
class SourcePool {
public:
    SourcePool(SourceId source_id, std::vector<Document> docs, std::size_t skipped = 0);

    SourceId source_id() const noexcept { return source_id_; }
    std::span<const Document> documents() const noexcept { return docs_; }
    /// Sum of token counts at construction time; does not shrink when sampling.
    std::uint64_t total_tokens() const noexcept { return total_tokens_; }
    /// Records skipped at ingest because they tokenized to zero tokens.
    std::size_t skipped() const noexcept { return skipped_; }

    std::size_t remaining() const noexcept { return remaining_.size(); }
    std::size_t consumed_count() const noexcept { return docs_.size() - remaining_.size(); }
    bool is_consumed(DocId id) const;

    /// Uniformly picks an unconsumed document and marks it consumed.
    /// Returns nullptr once every document has been drawn.
    const Document* draw_uniform(Rng& rng);

    /// Consumes the i-th entry of the remaining set (i < remaining()).
    const Document* take_remaining(std::size_t i);

private:
    SourceId source_id_;
    std::vector<Document> docs_;
    std::vector<std::uint32_t> remaining_;
    std::vector<std::uint32_t> position_;  // doc index -> slot in remaining_, or npos
    std::unordered_map<DocId, std::uint32_t> index_;
    std::uint64_t total_tokens_ = 0;
    std::size_t skipped_ = 0;
};

/// Uniform sampling over the union of several pools: every unconsumed document
/// across all pools is equally likely.
const Document* draw_uniform(std::span<SourcePool* const> pools, Rng& rng);

/// Reads a JSONL file (`text` required, `id` optional) into a pool.
/// `first_line_index` offsets the line ordinal used for id-less doc_ids so
/// several files of one source get distinct ids.
SourcePool ingest_jsonl(const std::string& path, SourceId source_id, Tokenizer& tokenizer,
                        std::uint64_t first_line_index = 0);

/// Ingests several files into one pool, in order.
SourcePool ingest_jsonl_files(const std::vector<std::string>& paths, SourceId source_id, Tokenizer& tokenizer);

/// doc_id for a record without an `id` field.
DocId derive_doc_id(SourceId source_id, std::uint64_t line_index);
/// doc_id for a record carrying an explicit `id` (string form).
DocId derive_doc_id(SourceId source_id, std::string_view id);

/// total_tokens(s) / sum of total_tokens, keyed by source id.
std::map<SourceId, double> source_weights(std::span<const SourcePool> pools);

/// Throws if two documents across the pools share a doc_id.
void check_unique_doc_ids(std::span<const SourcePool> pools);

}  // namespace chunkforge
