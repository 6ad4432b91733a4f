#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "chunkforge/types.hpp"

namespace chunkforge {

/// Packing strategy. The numeric values are the on-disk strategy tag.
enum class Strategy : std::uint8_t { Mix = 0, Uni = 1, Bm25 = 2 };

/// What happens to the unplaced suffix of a document split at a chunk end.
enum class RemainderPolicy { Keep, Drop };

/// Whether documents inside a chunk are separated by EOS (keep) or simply
/// abutted (strip).
enum class Separator { Eos, None };

enum class Bm25Mode { MultiHop, OneHop };

struct Bm25Config {
    std::size_t buffer_size = 3072;  // k
    std::size_t query_len = 500;     // q
    double k1 = 1.2;
    double b = 0.75;
    Bm25Mode mode = Bm25Mode::MultiHop;

    void validate() const;
};

struct PackingConfig {
    std::size_t length = 2048;
    Strategy strategy = Strategy::Mix;
    std::uint64_t seed = 0;
    std::size_t batch_size = 8;
    RemainderPolicy remainder = RemainderPolicy::Keep;
    Separator separator = Separator::Eos;
    TokenId eos_id = 0;
    Bm25Config bm25;

    void validate() const;
};

std::string_view to_string(Strategy s);
std::string_view to_string(Bm25Mode m);
std::string_view to_string(RemainderPolicy r);
std::string_view to_string(Separator s);
Strategy parse_strategy(std::string_view name);
Bm25Mode parse_bm25_mode(std::string_view name);
RemainderPolicy parse_remainder(std::string_view name);
Separator parse_separator(std::string_view name);

}  // namespace chunkforge
