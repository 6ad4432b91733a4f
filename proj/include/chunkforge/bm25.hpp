#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "chunkforge/config.hpp"
#include "chunkforge/corpus.hpp"
#include "chunkforge/packing.hpp"
#include "chunkforge/rng.hpp"
#include "chunkforge/tokenizer.hpp"

namespace chunkforge {

using StopwordSet = std::unordered_set<TokenId>;

/// Built-in English stopword list.
const std::vector<std::string>& default_stopwords();
/// Reads a stopword file: one token per line, trimmed; blank lines ignored.
std::vector<std::string> load_stopwords(const std::string& path);
/// Maps stopword strings to the ids of every vocabulary entry that equals one
/// of them after ASCII lower-casing.
StopwordSet resolve_stopwords(const std::vector<std::string>& words, const Vocabulary& vocab);

/// Sampled retrieval query. `terms` is a multiset kept in document order.
struct Query {
    std::vector<TokenId> terms;
    DocId origin = 0;

    /// Distinct terms in order of first occurrence; scores are summed in this order.
    std::vector<TokenId> distinct_terms() const;
};

/// Drops stopwords, then keeps a uniform sample of at most `query_len`
/// of the remaining token positions.
Query build_query(const Document& doc, std::size_t query_len, const StopwordSet& stopwords, Rng& rng);

struct Posting {
    std::uint32_t slot;  // buffer slot of the document
    std::uint32_t tf;
};

/// Bounded working set of documents with an incrementally maintained
/// inverted index. Holds non-owning pointers into a SourcePool.
class DocumentBuffer {
public:
    explicit DocumentBuffer(std::size_t capacity);

    std::size_t capacity() const noexcept { return slots_.size(); }
    std::size_t size() const noexcept { return live_.size(); }
    bool empty() const noexcept { return live_.empty(); }
    bool contains(DocId id) const { return by_id_.contains(id); }

    void insert(const Document& doc);
    /// Removes and returns the document; throws if it is not live.
    const Document& remove(DocId id);

    /// i-th live document in an arbitrary but deterministic order (i < size()).
    const Document& live_at(std::size_t i) const { return *slots_[live_[i]].doc; }
    /// Live doc ids ordered by insertion sequence.
    std::vector<DocId> ids_by_insertion() const;
    std::uint64_t insertion_seq(DocId id) const;
    const Document& document(DocId id) const;

    std::uint64_t total_len() const noexcept { return total_len_; }
    double avg_len() const noexcept;
    std::size_t doc_freq(TokenId term) const;
    std::uint32_t term_freq(DocId id, TokenId term) const;
    std::span<const Posting> postings(TokenId term) const;
    std::size_t term_count() const noexcept { return postings_.size(); }

    // Slot-level accessors used by the retriever.
    DocId slot_doc_id(std::uint32_t slot) const { return slots_[slot].doc->doc_id; }
    std::uint64_t slot_seq(std::uint32_t slot) const { return slots_[slot].seq; }
    std::uint32_t slot_len(std::uint32_t slot) const { return static_cast<std::uint32_t>(slots_[slot].doc->tokens.size()); }
    /// First live slot in insertion order that is not excluded.
    std::optional<std::uint32_t> oldest_slot(const std::unordered_set<DocId>& exclude) const;

private:
    struct Slot {
        const Document* doc = nullptr;
        std::uint64_t seq = 0;
        std::uint32_t live_pos = 0;
        std::vector<std::pair<TokenId, std::uint32_t>> term_freqs;  // sorted by term
    };

    std::vector<Slot> slots_;
    std::vector<std::uint32_t> free_slots_;
    std::vector<std::uint32_t> live_;
    std::unordered_map<DocId, std::uint32_t> by_id_;
    std::map<std::uint64_t, std::uint32_t> by_seq_;
    std::unordered_map<TokenId, std::vector<Posting>> postings_;
    std::uint64_t total_len_ = 0;
    std::uint64_t next_seq_ = 0;
};

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// Okapi BM25 with the non-negative IDF ln((N - df + 0.5) / (df + 0.5) + 1),
/// summed over the distinct query terms.
double bm25_score(const Query& query, DocId doc, const DocumentBuffer& buffer, Bm25Params params = {});

struct Retrieval {
    DocId doc_id = 0;
    double score = 0.0;
    std::uint64_t touched = 0;  // postings entries visited
};

/// Term-at-a-time scorer over the buffer's postings lists. Keeps per-slot
/// scratch space and touched-postings counters across calls.
class Retriever {
public:
    explicit Retriever(Bm25Params params = {}) : params_(params) {}

    /// Highest-scoring live document outside `exclude`; ties and the all-zero
    /// case go to the lowest insertion sequence. nullopt if nothing is eligible.
    std::optional<Retrieval> retrieve(const Query& query, const DocumentBuffer& buffer,
                                      const std::unordered_set<DocId>& exclude = {});

    const RetrievalStats& stats() const noexcept { return stats_; }

private:
    Bm25Params params_;
    std::vector<double> scores_;
    std::vector<std::uint8_t> hit_;
    std::vector<std::uint32_t> hit_slots_;
    RetrievalStats stats_;
};

/// Convenience wrapper around a throwaway Retriever.
std::optional<Retrieval> retrieve(const Query& query, const DocumentBuffer& buffer,
                                  const std::unordered_set<DocId>& exclude = {}, Bm25Params params = {});

/// Tops the buffer up to capacity with uniform draws from the pool.
/// Returns the number of documents added.
std::size_t refill(DocumentBuffer& buffer, SourcePool& pool, Rng& rng);

/// Supplies the documents of a retrieval chain from a buffer.
///
/// The first document of a chain is drawn uniformly from the buffer; each
/// following document is retrieved with a query built from the previous one
/// (multi-hop) or from the chain's first document (one-hop). Chosen documents
/// leave the buffer. An empty buffer is topped up from the pool before giving up.
class RetrievalChain {
public:
    RetrievalChain(DocumentBuffer& buffer, SourcePool& pool, const Bm25Config& config, const StopwordSet& stopwords,
                   Rng& rng, Retriever& retriever);

    /// Starts a new chain. With an anchor (e.g. the document whose suffix
    /// opens the chunk) the next pull is retrieved against it.
    void reset(const Document* anchor = nullptr);
    const Document* next();

private:
    bool ensure_nonempty();

    DocumentBuffer* buffer_;
    SourcePool* pool_;
    const Bm25Config* config_;
    const StopwordSet* stopwords_;
    Rng* rng_;
    Retriever* retriever_;
    const Document* first_ = nullptr;
    const Document* last_ = nullptr;
    std::optional<Query> one_hop_query_;
};

/// BM25 packing over one source: a k-document buffer refilled after every chunk.
class Bm25Stream final : public ChunkStream {
public:
    Bm25Stream(SourcePool& pool, const PackingConfig& config, std::shared_ptr<const StopwordSet> stopwords);

    std::optional<Chunk> next() override;
    PackingTally tally() const override { return builder_.tally(); }
    std::optional<RetrievalStats> retrieval_stats() const override { return retriever_.stats(); }

    const Retriever& retriever() const noexcept { return retriever_; }
    const DocumentBuffer& buffer() const noexcept { return buffer_; }

private:
    SourcePool* pool_;
    Bm25Config config_;
    std::shared_ptr<const StopwordSet> stopwords_;
    Rng rng_;
    DocumentBuffer buffer_;
    Retriever retriever_;
    RetrievalChain chain_;
    ChunkBuilder builder_;
    bool primed_ = false;
};

}  // namespace chunkforge
