#include "chunkforge/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/core.h>

namespace chunkforge {

const std::vector<std::string>& default_stopwords() {
    static const std::vector<std::string> words = {
        "i",       "me",      "my",       "myself",  "we",       "our",     "ours",     "ourselves", "you",
        "your",    "yours",   "yourself", "yourselves", "he",    "him",     "his",      "himself",   "she",
        "her",     "hers",    "herself",  "it",      "its",      "itself",  "they",     "them",      "their",
        "theirs",  "themselves", "what",  "which",   "who",      "whom",    "this",     "that",      "these",
        "those",   "am",      "is",       "are",     "was",      "were",    "be",       "been",      "being",
        "have",    "has",     "had",      "having",  "do",       "does",    "did",      "doing",     "a",
        "an",      "the",     "and",      "but",     "if",       "or",      "because",  "as",        "until",
        "while",   "of",      "at",       "by",      "for",      "with",    "about",    "against",   "between",
        "into",    "through", "during",   "before",  "after",    "above",   "below",    "to",        "from",
        "up",      "down",    "in",       "out",     "on",       "off",     "over",     "under",     "again",
        "further", "then",    "once",     "here",    "there",    "when",    "where",    "why",       "how",
        "all",     "any",     "both",     "each",    "few",      "more",    "most",     "other",     "some",
        "such",    "no",      "nor",      "not",     "only",     "own",     "same",     "so",        "than",
        "too",     "very",    "s",        "t",       "can",      "will",    "just",     "don",       "should",
        "now",     "d",       "ll",       "m",       "o",        "re",      "ve",       "y",         "ain",
        "aren",    "couldn",  "didn",     "doesn",   "hadn",     "hasn",    "haven",    "isn",       "ma",
        "mightn",  "mustn",   "needn",    "shan",    "shouldn",  "wasn",    "weren",    "won",       "wouldn",
    };
    return words;
}

std::vector<std::string> load_stopwords(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path, "cannot open stopword file");
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        words.push_back(line.substr(first, line.find_last_not_of(" \t\r") - first + 1));
    }
    return words;
}

namespace {
std::string ascii_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}
}  // namespace

StopwordSet resolve_stopwords(const std::vector<std::string>& words, const Vocabulary& vocab) {
    std::unordered_set<std::string> lowered;
    for (const auto& w : words) lowered.insert(ascii_lower(w));
    StopwordSet ids;
    for (const auto& [id, str] : vocab.entries()) {
        if (lowered.contains(ascii_lower(str))) ids.insert(id);
    }
    return ids;
}

std::vector<TokenId> Query::distinct_terms() const {
    std::vector<TokenId> out;
    std::unordered_set<TokenId> seen;
    for (TokenId t : terms) {
        if (seen.insert(t).second) out.push_back(t);
    }
    return out;
}

Query build_query(const Document& doc, std::size_t query_len, const StopwordSet& stopwords, Rng& rng) {
    Query query;
    query.origin = doc.doc_id;
    std::vector<std::uint32_t> positions;
    positions.reserve(doc.tokens.size());
    for (std::uint32_t i = 0; i < doc.tokens.size(); ++i) {
        if (!stopwords.contains(doc.tokens[i])) positions.push_back(i);
    }
    if (positions.size() > query_len) {
        // Partial Fisher-Yates: the first query_len entries become the sample.
        for (std::size_t i = 0; i < query_len; ++i) {
            const auto j = i + rng.uniform_index(positions.size() - i);
            std::swap(positions[i], positions[j]);
        }
        positions.resize(query_len);
        std::ranges::sort(positions);
    }
    query.terms.reserve(positions.size());
    for (auto p : positions) query.terms.push_back(doc.tokens[p]);
    return query;
}

DocumentBuffer::DocumentBuffer(std::size_t capacity) : slots_(capacity) {
    if (capacity < 1) throw UsageError("document buffer capacity must be positive");
    free_slots_.reserve(capacity);
    for (std::size_t i = capacity; i-- > 0;) free_slots_.push_back(static_cast<std::uint32_t>(i));
    live_.reserve(capacity);
}

void DocumentBuffer::insert(const Document& doc) {
    if (free_slots_.empty()) throw InvariantError(fmt::format("document buffer is full ({} docs)", capacity()));
    if (by_id_.contains(doc.doc_id)) throw InvariantError(fmt::format("document {} already buffered", doc.doc_id));
    const std::uint32_t slot = free_slots_.back();
    free_slots_.pop_back();

    Slot& s = slots_[slot];
    s.doc = &doc;
    s.seq = next_seq_++;
    s.live_pos = static_cast<std::uint32_t>(live_.size());
    live_.push_back(slot);
    by_id_.emplace(doc.doc_id, slot);
    by_seq_.emplace(s.seq, slot);

    std::vector<TokenId> sorted(doc.tokens);
    std::ranges::sort(sorted);
    s.term_freqs.clear();
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        s.term_freqs.emplace_back(sorted[i], static_cast<std::uint32_t>(j - i));
        i = j;
    }
    for (const auto& [term, tf] : s.term_freqs) postings_[term].push_back({slot, tf});
    total_len_ += doc.tokens.size();
}

const Document& DocumentBuffer::remove(DocId id) {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw InvariantError(fmt::format("document {} is not in the buffer", id));
    const std::uint32_t slot = it->second;
    Slot& s = slots_[slot];

    for (const auto& [term, tf] : s.term_freqs) {
        auto pl = postings_.find(term);
        auto& list = pl->second;
        auto hit = std::ranges::find(list, slot, &Posting::slot);
        *hit = list.back();
        list.pop_back();
        if (list.empty()) postings_.erase(pl);
    }
    const std::uint32_t moved = live_.back();
    live_[s.live_pos] = moved;
    slots_[moved].live_pos = s.live_pos;
    live_.pop_back();
    by_seq_.erase(s.seq);
    by_id_.erase(it);
    total_len_ -= s.doc->tokens.size();

    const Document& doc = *s.doc;
    s.doc = nullptr;
    s.term_freqs.clear();
    free_slots_.push_back(slot);
    return doc;
}

std::vector<DocId> DocumentBuffer::ids_by_insertion() const {
    std::vector<DocId> out;
    out.reserve(by_seq_.size());
    for (const auto& [seq, slot] : by_seq_) out.push_back(slots_[slot].doc->doc_id);
    return out;
}

std::uint64_t DocumentBuffer::insertion_seq(DocId id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw InvariantError(fmt::format("document {} is not in the buffer", id));
    return slots_[it->second].seq;
}

const Document& DocumentBuffer::document(DocId id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw InvariantError(fmt::format("document {} is not in the buffer", id));
    return *slots_[it->second].doc;
}

double DocumentBuffer::avg_len() const noexcept {
    return live_.empty() ? 0.0 : static_cast<double>(total_len_) / static_cast<double>(live_.size());
}

std::size_t DocumentBuffer::doc_freq(TokenId term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? 0 : it->second.size();
}

std::uint32_t DocumentBuffer::term_freq(DocId id, TokenId term) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw InvariantError(fmt::format("document {} is not in the buffer", id));
    const auto& tfs = slots_[it->second].term_freqs;
    auto hit = std::ranges::lower_bound(tfs, term, {}, &std::pair<TokenId, std::uint32_t>::first);
    return (hit != tfs.end() && hit->first == term) ? hit->second : 0;
}

std::span<const Posting> DocumentBuffer::postings(TokenId term) const {
    auto it = postings_.find(term);
    if (it == postings_.end()) return {};
    return it->second;
}

std::optional<std::uint32_t> DocumentBuffer::oldest_slot(const std::unordered_set<DocId>& exclude) const {
    for (const auto& [seq, slot] : by_seq_) {
        if (!exclude.contains(slots_[slot].doc->doc_id)) return slot;
    }
    return std::nullopt;
}

namespace {

double idf(std::size_t live, std::size_t df) {
    const double n = static_cast<double>(live);
    const double d = static_cast<double>(df);
    return std::log((n - d + 0.5) / (d + 0.5) + 1.0);
}

double term_weight(double term_idf, std::uint32_t tf, std::uint32_t len, double avg_len, const Bm25Params& p) {
    const double f = static_cast<double>(tf);
    return term_idf * (f * (p.k1 + 1.0)) / (f + p.k1 * (1.0 - p.b + p.b * static_cast<double>(len) / avg_len));
}

}  // namespace

double bm25_score(const Query& query, DocId doc, const DocumentBuffer& buffer, Bm25Params params) {
    if (!buffer.contains(doc)) throw InvariantError(fmt::format("document {} is not in the buffer", doc));
    const auto len = static_cast<std::uint32_t>(buffer.document(doc).tokens.size());
    const double avg = buffer.avg_len();
    double score = 0.0;
    for (TokenId t : query.distinct_terms()) {
        const std::uint32_t tf = buffer.term_freq(doc, t);
        if (tf == 0) continue;
        score += term_weight(idf(buffer.size(), buffer.doc_freq(t)), tf, len, avg, params);
    }
    return score;
}

std::optional<Retrieval> Retriever::retrieve(const Query& query, const DocumentBuffer& buffer,
                                             const std::unordered_set<DocId>& exclude) {
    if (scores_.size() < buffer.capacity()) {
        scores_.assign(buffer.capacity(), 0.0);
        hit_.assign(buffer.capacity(), 0);
    }
    const double avg = buffer.avg_len();
    const std::size_t live = buffer.size();
    std::uint64_t touched = 0;

    for (TokenId t : query.distinct_terms()) {
        const auto plist = buffer.postings(t);
        if (plist.empty()) continue;
        touched += plist.size();
        const double term_idf = idf(live, plist.size());
        for (const Posting& p : plist) {
            if (!hit_[p.slot]) {
                hit_[p.slot] = 1;
                hit_slots_.push_back(p.slot);
            }
            scores_[p.slot] += term_weight(term_idf, p.tf, buffer.slot_len(p.slot), avg, params_);
        }
    }

    std::optional<std::uint32_t> best;
    for (std::uint32_t slot : hit_slots_) {
        if (!exclude.empty() && exclude.contains(buffer.slot_doc_id(slot))) continue;
        if (!best || scores_[slot] > scores_[*best] ||
            (scores_[slot] == scores_[*best] && buffer.slot_seq(slot) < buffer.slot_seq(*best))) {
            best = slot;
        }
    }
    std::optional<Retrieval> result;
    if (best) {
        result = Retrieval{buffer.slot_doc_id(*best), scores_[*best], touched};
    } else if (auto oldest = buffer.oldest_slot(exclude)) {
        result = Retrieval{buffer.slot_doc_id(*oldest), 0.0, touched};
    }
    for (std::uint32_t slot : hit_slots_) {
        scores_[slot] = 0.0;
        hit_[slot] = 0;
    }
    hit_slots_.clear();

    ++stats_.calls;
    stats_.touched_total += touched;
    stats_.touched_max = std::max(stats_.touched_max, touched);
    const double budget = static_cast<double>(query.terms.size()) * static_cast<double>(buffer.capacity());
    if (touched > 0) stats_.bound_ratio_max = std::max(stats_.bound_ratio_max, static_cast<double>(touched) / budget);
    if (static_cast<double>(touched) > budget) stats_.bound_violated = true;
    return result;
}

std::optional<Retrieval> retrieve(const Query& query, const DocumentBuffer& buffer,
                                  const std::unordered_set<DocId>& exclude, Bm25Params params) {
    Retriever r(params);
    return r.retrieve(query, buffer, exclude);
}

std::size_t refill(DocumentBuffer& buffer, SourcePool& pool, Rng& rng) {
    std::size_t added = 0;
    while (buffer.size() < buffer.capacity()) {
        const Document* doc = pool.draw_uniform(rng);
        if (doc == nullptr) break;
        buffer.insert(*doc);
        ++added;
    }
    return added;
}

RetrievalChain::RetrievalChain(DocumentBuffer& buffer, SourcePool& pool, const Bm25Config& config,
                               const StopwordSet& stopwords, Rng& rng, Retriever& retriever)
    : buffer_(&buffer), pool_(&pool), config_(&config), stopwords_(&stopwords), rng_(&rng), retriever_(&retriever) {}

void RetrievalChain::reset(const Document* anchor) {
    first_ = anchor;
    last_ = anchor;
    one_hop_query_.reset();
}

bool RetrievalChain::ensure_nonempty() {
    if (buffer_->empty()) refill(*buffer_, *pool_, *rng_);
    return !buffer_->empty();
}

const Document* RetrievalChain::next() {
    if (!ensure_nonempty()) return nullptr;
    const Document* chosen = nullptr;
    if (last_ == nullptr) {
        chosen = &buffer_->live_at(rng_->uniform_index(buffer_->size()));
        first_ = chosen;
    } else {
        Query hop;
        const Query* query = &hop;
        if (config_->mode == Bm25Mode::OneHop) {
            if (!one_hop_query_) one_hop_query_ = build_query(*first_, config_->query_len, *stopwords_, *rng_);
            query = &*one_hop_query_;
        } else {
            hop = build_query(*last_, config_->query_len, *stopwords_, *rng_);
        }
        const auto hit = retriever_->retrieve(*query, *buffer_);
        chosen = &buffer_->document(hit->doc_id);
    }
    buffer_->remove(chosen->doc_id);
    last_ = chosen;
    return chosen;
}

Bm25Stream::Bm25Stream(SourcePool& pool, const PackingConfig& config, std::shared_ptr<const StopwordSet> stopwords)
    : pool_(&pool),
      config_(config.bm25),
      stopwords_(stopwords ? std::move(stopwords) : std::make_shared<const StopwordSet>()),
      rng_(stream_seed(config.seed, pool.source_id())),
      buffer_(config.bm25.buffer_size),
      retriever_(Bm25Params{config.bm25.k1, config.bm25.b}),
      chain_(buffer_, pool, config_, *stopwords_, rng_, retriever_),
      builder_(config) {
    config_.validate();
}

std::optional<Chunk> Bm25Stream::next() {
    if (!primed_) {
        refill(buffer_, *pool_, rng_);
        primed_ = true;
    }
    chain_.reset(builder_.carry_document());
    auto chunk = builder_.build([this] { return chain_.next(); });
    if (chunk) refill(buffer_, *pool_, rng_);
    return chunk;
}

}  // namespace chunkforge
