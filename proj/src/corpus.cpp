#include "chunkforge/corpus.hpp"

#include <fstream>
#include <limits>
#include <unordered_set>

#include <fmt/core.h>
#include <json.hpp>

#include "chunkforge/hash.hpp"

namespace chunkforge {

namespace {
constexpr std::uint32_t kNotRemaining = std::numeric_limits<std::uint32_t>::max();
}

IngestError::IngestError(const std::string& path, std::size_t line, const std::string& what)
    : Error(fmt::format("{}:{}: {}", path, line, what)), path_(path), line_(line) {}

SourcePool::SourcePool(SourceId source_id, std::vector<Document> docs, std::size_t skipped)
    : source_id_(source_id), docs_(std::move(docs)), skipped_(skipped) {
    if (docs_.size() >= kNotRemaining) throw Error("too many documents in one source pool");
    remaining_.reserve(docs_.size());
    position_.reserve(docs_.size());
    for (std::uint32_t i = 0; i < docs_.size(); ++i) {
        const auto& d = docs_[i];
        if (d.tokens.empty()) throw InvariantError(fmt::format("document {} has no tokens", d.doc_id));
        if (d.source_id != source_id_) {
            throw InvariantError(
                fmt::format("document {} has source {} but pool is {}", d.doc_id, d.source_id, source_id_));
        }
        if (!index_.emplace(d.doc_id, i).second) {
            throw InvariantError(fmt::format("duplicate doc_id {} in source {}", d.doc_id, source_id_));
        }
        total_tokens_ += d.tokens.size();
        remaining_.push_back(i);
        position_.push_back(i);
    }
}

bool SourcePool::is_consumed(DocId id) const {
    auto it = index_.find(id);
    return it != index_.end() && position_[it->second] == kNotRemaining;
}

const Document* SourcePool::take_remaining(std::size_t i) {
    const std::uint32_t doc = remaining_[i];
    const std::uint32_t last = remaining_.back();
    remaining_[i] = last;
    position_[last] = static_cast<std::uint32_t>(i);
    remaining_.pop_back();
    position_[doc] = kNotRemaining;
    return &docs_[doc];
}

const Document* SourcePool::draw_uniform(Rng& rng) {
    if (remaining_.empty()) return nullptr;
    return take_remaining(rng.uniform_index(remaining_.size()));
}

const Document* draw_uniform(std::span<SourcePool* const> pools, Rng& rng) {
    std::uint64_t total = 0;
    for (const auto* p : pools) total += p->remaining();
    if (total == 0) return nullptr;
    std::uint64_t pick = rng.uniform_index(total);
    for (auto* p : pools) {
        if (pick < p->remaining()) return p->take_remaining(pick);
        pick -= p->remaining();
    }
    return nullptr;  // unreachable
}

DocId derive_doc_id(SourceId source_id, std::uint64_t line_index) {
    return mix64(mix64(source_id) ^ line_index);
}

DocId derive_doc_id(SourceId source_id, std::string_view id) {
    return Fnv1a().update_u64(source_id).update(id).digest();
}

namespace {

std::uint64_t ingest_into(const std::string& path, SourceId source_id, Tokenizer& tokenizer,
                          std::uint64_t line_index, std::vector<Document>& docs, std::size_t& skipped) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path, "cannot open input file");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::uint64_t ordinal = line_index++;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

        nlohmann::json record;
        try {
            record = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw IngestError(path, line_no, fmt::format("malformed JSON: {}", e.what()));
        }
        if (!record.is_object()) throw IngestError(path, line_no, "record is not a JSON object");
        auto text = record.find("text");
        if (text == record.end() || !text->is_string()) {
            throw IngestError(path, line_no, "missing string field 'text'");
        }

        Document doc;
        doc.source_id = source_id;
        doc.tokens = tokenizer.tokenize(text->get_ref<const std::string&>());
        if (doc.tokens.empty()) {
            ++skipped;
            continue;
        }
        for (TokenId t : doc.tokens) {
            if (t == tokenizer.eos_id()) throw IngestError(path, line_no, "document contains the EOS id");
        }
        auto id = record.find("id");
        if (id == record.end() || id->is_null()) {
            doc.doc_id = derive_doc_id(source_id, ordinal);
        } else if (id->is_string()) {
            doc.doc_id = derive_doc_id(source_id, id->get_ref<const std::string&>());
        } else if (id->is_number_integer()) {
            doc.doc_id = derive_doc_id(source_id, id->dump());
        } else {
            throw IngestError(path, line_no, "field 'id' must be a string or integer");
        }
        docs.push_back(std::move(doc));
    }
    if (in.bad()) throw IoError(path, "read error");
    return line_index;
}

}  // namespace

SourcePool ingest_jsonl_files(const std::vector<std::string>& paths, SourceId source_id, Tokenizer& tokenizer) {
    std::vector<Document> docs;
    std::size_t skipped = 0;
    std::uint64_t line_index = 0;
    for (const auto& path : paths) line_index = ingest_into(path, source_id, tokenizer, line_index, docs, skipped);
    return SourcePool(source_id, std::move(docs), skipped);
}

SourcePool ingest_jsonl(const std::string& path, SourceId source_id, Tokenizer& tokenizer,
                        std::uint64_t first_line_index) {
    std::vector<Document> docs;
    std::size_t skipped = 0;
    ingest_into(path, source_id, tokenizer, first_line_index, docs, skipped);
    return SourcePool(source_id, std::move(docs), skipped);
}

std::map<SourceId, double> source_weights(std::span<const SourcePool> pools) {
    std::uint64_t total = 0;
    for (const auto& p : pools) total += p.total_tokens();
    if (total == 0) throw Error("cannot compute source weights: every source is empty");
    std::map<SourceId, double> weights;
    for (const auto& p : pools) {
        weights[p.source_id()] += static_cast<double>(p.total_tokens()) / static_cast<double>(total);
    }
    return weights;
}

void check_unique_doc_ids(std::span<const SourcePool> pools) {
    std::unordered_set<DocId> seen;
    for (const auto& p : pools) {
        for (const auto& d : p.documents()) {
            if (!seen.insert(d.doc_id).second) {
                throw Error(fmt::format("duplicate document id {} (source {})", d.doc_id, p.source_id()));
            }
        }
    }
}

}  // namespace chunkforge
