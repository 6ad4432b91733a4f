#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "chunkforge/types.hpp"

namespace chunkforge {

enum class TokenizerKind { WhitespacePunct, ExternalVocab };

std::string_view to_string(TokenizerKind kind);
TokenizerKind parse_tokenizer_kind(std::string_view name);

/// Token-string <-> id table. For the whitespace-punct tokenizer it grows as
/// text is seen; for the external-vocab tokenizer it is fixed at load time.
class Vocabulary {
public:
    std::optional<TokenId> find(std::string_view token) const;
    /// Returns the existing id or assigns `next_id` and advances it.
    TokenId intern(std::string_view token, TokenId id);
    const std::string* lookup(TokenId id) const;

    std::size_t size() const noexcept { return by_id_.size(); }
    /// (id, string) pairs in id order.
    std::vector<std::pair<TokenId, std::string>> entries() const;

private:
    std::unordered_map<std::string, TokenId> by_string_;
    std::unordered_map<TokenId, std::string> by_id_;
};

/// Tokenizer configuration plus its vocabulary state.
///
/// The whitespace-punct tokenizer mutates the vocabulary, so a Tokenizer is
/// single-writer; ingest sources sequentially to keep ids deterministic.
class Tokenizer {
public:
    /// Whitespace-punct tokenizer with an on-the-fly vocabulary. Reserved ids
    /// default to eos=0, unk=1; new strings get ids from 2 upwards.
    static Tokenizer whitespace_punct(TokenId eos_id = 0, TokenId unk_id = 1);

    /// Fixed vocabulary, id = position in `tokens`. Reserved ids default to
    /// eos=V, unk=V+1.
    static Tokenizer external_vocab(const std::vector<std::string>& tokens,
                                    std::optional<TokenId> eos_id = std::nullopt,
                                    std::optional<TokenId> unk_id = std::nullopt);

    /// Loads a vocabulary file: one token per line, id = line index.
    static Tokenizer from_vocab_file(const std::string& path,
                                     std::optional<TokenId> eos_id = std::nullopt,
                                     std::optional<TokenId> unk_id = std::nullopt);

    std::vector<TokenId> tokenize(std::string_view text);

    TokenizerKind kind() const noexcept { return kind_; }
    TokenId eos_id() const noexcept { return eos_id_; }
    TokenId unk_id() const noexcept { return unk_id_; }
    const Vocabulary& vocab() const noexcept { return vocab_; }

    /// Stable hash of kind, reserved ids and the current vocabulary.
    std::uint64_t fingerprint() const;

private:
    Tokenizer(TokenizerKind kind, TokenId eos, TokenId unk);
    TokenId id_for(std::string_view piece);

    TokenizerKind kind_;
    TokenId eos_id_;
    TokenId unk_id_;
    TokenId next_id_ = 0;
    Vocabulary vocab_;
};

/// Splits on Unicode whitespace and isolates each ASCII punctuation
/// character as its own piece. Invalid UTF-8 bytes are kept inside pieces.
std::vector<std::string_view> split_whitespace_punct(std::string_view text);

}  // namespace chunkforge
