#include "chunkforge/config.hpp"

#include <fmt/core.h>

namespace chunkforge {

void Bm25Config::validate() const {
    if (buffer_size < 2) throw UsageError(fmt::format("buffer size must be >= 2 (got {})", buffer_size));
    if (query_len < 1) throw UsageError("query length must be >= 1");
    if (!(k1 > 0.0)) throw UsageError(fmt::format("k1 must be > 0 (got {})", k1));
    if (!(b >= 0.0 && b <= 1.0)) throw UsageError(fmt::format("b must lie in [0, 1] (got {})", b));
}

void PackingConfig::validate() const {
    if (length < 2) throw UsageError(fmt::format("chunk length must be >= 2 (got {})", length));
    if (length > UINT32_MAX) throw UsageError("chunk length does not fit in 32 bits");
    if (batch_size < 1) throw UsageError("batch size must be >= 1");
    bm25.validate();
}

std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::Mix:
            return "mix";
        case Strategy::Uni:
            return "uni";
        case Strategy::Bm25:
            return "bm25";
    }
    return "?";
}

std::string_view to_string(Bm25Mode m) { return m == Bm25Mode::MultiHop ? "multi_hop" : "one_hop"; }
std::string_view to_string(RemainderPolicy r) { return r == RemainderPolicy::Keep ? "keep" : "drop"; }
std::string_view to_string(Separator s) { return s == Separator::Eos ? "keep" : "strip"; }

Strategy parse_strategy(std::string_view name) {
    if (name == "mix") return Strategy::Mix;
    if (name == "uni") return Strategy::Uni;
    if (name == "bm25") return Strategy::Bm25;
    throw UsageError(fmt::format("unknown strategy '{}' (expected mix, uni or bm25)", name));
}

Bm25Mode parse_bm25_mode(std::string_view name) {
    if (name == "multi_hop") return Bm25Mode::MultiHop;
    if (name == "one_hop") return Bm25Mode::OneHop;
    throw UsageError(fmt::format("unknown retrieval mode '{}' (expected multi_hop or one_hop)", name));
}

RemainderPolicy parse_remainder(std::string_view name) {
    if (name == "keep") return RemainderPolicy::Keep;
    if (name == "drop") return RemainderPolicy::Drop;
    throw UsageError(fmt::format("unknown remainder policy '{}' (expected keep or drop)", name));
}

Separator parse_separator(std::string_view name) {
    if (name == "keep") return Separator::Eos;
    if (name == "strip") return Separator::None;
    throw UsageError(fmt::format("unknown intra_eos value '{}' (expected keep or strip)", name));
}

}  // namespace chunkforge
