#include "chunkforge/tokenizer.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/core.h>

#include "chunkforge/hash.hpp"

namespace chunkforge {

std::string_view to_string(TokenizerKind kind) {
    switch (kind) {
        case TokenizerKind::WhitespacePunct:
            return "whitespace-punct";
        case TokenizerKind::ExternalVocab:
            return "external-vocab";
    }
    return "unknown";
}

TokenizerKind parse_tokenizer_kind(std::string_view name) {
    if (name == "whitespace-punct") return TokenizerKind::WhitespacePunct;
    if (name == "external-vocab") return TokenizerKind::ExternalVocab;
    throw UsageError(fmt::format("unknown tokenizer kind '{}'", name));
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
    auto it = by_string_.find(std::string(token));
    if (it == by_string_.end()) return std::nullopt;
    return it->second;
}

TokenId Vocabulary::intern(std::string_view token, TokenId id) {
    auto [it, inserted] = by_string_.emplace(std::string(token), id);
    if (inserted) by_id_.emplace(id, it->first);
    return it->second;
}

const std::string* Vocabulary::lookup(TokenId id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &it->second;
}

std::vector<std::pair<TokenId, std::string>> Vocabulary::entries() const {
    std::vector<std::pair<TokenId, std::string>> out(by_id_.begin(), by_id_.end());
    std::ranges::sort(out, {}, &std::pair<TokenId, std::string>::first);
    return out;
}

namespace {

// Decodes one UTF-8 code point at `pos`. Returns the code point and its byte
// length; malformed sequences decode as a single byte with code point -1.
std::pair<std::int32_t, std::size_t> decode_utf8(std::string_view s, std::size_t pos) {
    const auto b0 = static_cast<unsigned char>(s[pos]);
    if (b0 < 0x80) return {b0, 1};
    std::size_t len = 0;
    std::int32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        return {-1, 1};
    }
    if (pos + len > s.size()) return {-1, 1};
    for (std::size_t i = 1; i < len; ++i) {
        const auto b = static_cast<unsigned char>(s[pos + i]);
        if ((b & 0xC0) != 0x80) return {-1, 1};
        cp = (cp << 6) | (b & 0x3F);
    }
    return {cp, len};
}

bool is_unicode_space(std::int32_t cp) {
    if (cp >= 0x09 && cp <= 0x0D) return true;
    if (cp >= 0x2000 && cp <= 0x200A) return true;
    switch (cp) {
        case 0x20:
        case 0x85:
        case 0xA0:
        case 0x1680:
        case 0x2028:
        case 0x2029:
        case 0x202F:
        case 0x205F:
        case 0x3000:
            return true;
        default:
            return false;
    }
}

bool is_ascii_punct(std::int32_t cp) {
    return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) || (cp >= 0x5B && cp <= 0x60) ||
           (cp >= 0x7B && cp <= 0x7E);
}

}  // namespace

std::vector<std::string_view> split_whitespace_punct(std::string_view text) {
    std::vector<std::string_view> pieces;
    std::size_t start = 0;
    bool in_word = false;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto [cp, len] = decode_utf8(text, pos);
        if (is_unicode_space(cp) || is_ascii_punct(cp)) {
            if (in_word) pieces.push_back(text.substr(start, pos - start));
            in_word = false;
            if (is_ascii_punct(cp)) pieces.push_back(text.substr(pos, len));
        } else if (!in_word) {
            start = pos;
            in_word = true;
        }
        pos += len;
    }
    if (in_word) pieces.push_back(text.substr(start));
    return pieces;
}

Tokenizer::Tokenizer(TokenizerKind kind, TokenId eos, TokenId unk) : kind_(kind), eos_id_(eos), unk_id_(unk) {
    if (eos == unk) throw UsageError(fmt::format("eos id and unk id must differ (both {})", eos));
}

Tokenizer Tokenizer::whitespace_punct(TokenId eos_id, TokenId unk_id) {
    return Tokenizer(TokenizerKind::WhitespacePunct, eos_id, unk_id);
}

Tokenizer Tokenizer::external_vocab(const std::vector<std::string>& tokens, std::optional<TokenId> eos_id,
                                    std::optional<TokenId> unk_id) {
    const auto v = static_cast<TokenId>(tokens.size());
    Tokenizer tok(TokenizerKind::ExternalVocab, eos_id.value_or(v), unk_id.value_or(v + 1));
    for (TokenId reserved : {tok.eos_id_, tok.unk_id_}) {
        if (reserved < v) {
            throw UsageError(
                fmt::format("reserved id {} collides with vocabulary entry '{}'", reserved, tokens[reserved]));
        }
    }
    for (TokenId id = 0; id < v; ++id) {
        if (tok.vocab_.intern(tokens[id], id) != id) {
            throw UsageError(fmt::format("duplicate vocabulary entry '{}' at line {}", tokens[id], id + 1));
        }
    }
    tok.next_id_ = v;
    return tok;
}

Tokenizer Tokenizer::from_vocab_file(const std::string& path, std::optional<TokenId> eos_id,
                                     std::optional<TokenId> unk_id) {
    std::ifstream in(path);
    if (!in) throw IoError(path, "cannot open vocabulary file");
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        tokens.push_back(line);
    }
    return external_vocab(tokens, eos_id, unk_id);
}

TokenId Tokenizer::id_for(std::string_view piece) {
    if (kind_ == TokenizerKind::ExternalVocab) return vocab_.find(piece).value_or(unk_id_);
    if (auto id = vocab_.find(piece)) return *id;
    while (next_id_ == eos_id_ || next_id_ == unk_id_) ++next_id_;
    return vocab_.intern(piece, next_id_++);
}

std::vector<TokenId> Tokenizer::tokenize(std::string_view text) {
    const auto pieces = split_whitespace_punct(text);
    std::vector<TokenId> ids;
    ids.reserve(pieces.size());
    for (auto piece : pieces) ids.push_back(id_for(piece));
    return ids;
}

std::uint64_t Tokenizer::fingerprint() const {
    Fnv1a h;
    h.update(to_string(kind_)).update_u64(eos_id_).update_u64(unk_id_);
    for (const auto& [id, str] : vocab_.entries()) {
        h.update_u64(id).update_u64(str.size()).update(str);
    }
    return h.digest();
}

}  // namespace chunkforge
