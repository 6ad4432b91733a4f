#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "chunkforge/types.hpp"

namespace chunkforge {

/// Token frequencies of one sequence, most frequent first; ties keep first-occurrence order.
struct RankFrequency {
    struct Entry {
        TokenId token;
        std::uint64_t frequency;
    };
    std::vector<Entry> entries;  // rank r is entries[r - 1]
};

RankFrequency rank_frequency(std::span<const TokenId> tokens, std::optional<TokenId> exclude = std::nullopt);

/// Raised when a Zipf fit has fewer than two distinct ranks to work with.
class UndefinedFitError : public Error {
public:
    using Error::Error;
};

/// alpha = -slope of the least-squares line through (ln r, ln f) over every rank
/// with f >= min_freq. Lower alpha means burstier.
double fit_zipf(const RankFrequency& rf, std::uint64_t min_freq = 1);

double zipf_coefficient(std::span<const TokenId> tokens, std::optional<TokenId> exclude = std::nullopt,
                        std::uint64_t min_freq = 1);

/// 100 * unique n-grams / n-gram windows. Windows containing `skip` are ignored.
double distinct_ngram_pct(std::span<const TokenId> tokens, std::size_t n, std::optional<TokenId> skip = std::nullopt);

/// Number of chunks each token occurs in (at most once per chunk).
class ChunkFrequency {
public:
    explicit ChunkFrequency(std::optional<TokenId> exclude = std::nullopt) : exclude_(exclude) {}

    void add_chunk(std::span<const TokenId> tokens);

    struct CurvePoint {
        std::uint64_t rank;  // by total occurrences, 1 = most frequent
        TokenId token;
        std::uint64_t occurrences;
        std::uint64_t chunks;
    };
    /// Tokens ordered by global frequency rank (ties: first seen first).
    std::vector<CurvePoint> curve() const;

    std::uint64_t chunk_count() const noexcept { return chunks_; }
    std::uint64_t chunks_containing(TokenId t) const;
    /// Sum of per-token chunk counts.
    std::uint64_t total_memberships() const noexcept;

private:
    struct Stat {
        std::uint64_t occurrences = 0;
        std::uint64_t chunks = 0;
        std::uint64_t first_seen = 0;
        std::uint64_t last_chunk = 0;
    };
    std::optional<TokenId> exclude_;
    std::unordered_map<TokenId, Stat> stats_;
    std::uint64_t chunks_ = 0;
    std::uint64_t seen_ = 0;
};

/// Head-averaged attention of one query position over its whole context.
/// `position` is 1-based within the second document; `scores` has
/// prefix_len + position entries, the first prefix_len covering the
/// irrelevant preceding document.
struct AttentionRecord {
    std::uint32_t layer = 0;
    std::uint32_t position = 1;
    std::uint32_t prefix_len = 0;
    std::vector<double> scores;
};

inline constexpr double kAttentionNormTolerance = 1e-6;

/// Attention mass on the irrelevant prefix. Throws if the row does not sum to 1.
double distraction_proportion(const AttentionRecord& record);

/// Uniform-attention reference: prefix_len / (prefix_len + position).
double uniform_distraction_baseline(std::uint32_t prefix_len, std::uint32_t position);

struct DistractionCurves {
    std::uint32_t prefix_len = 0;
    std::vector<std::vector<double>> per_layer;  // [layer][position - 1]
    std::vector<double> layer_average;           // [position - 1]
};

/// Per-layer curves and their mean over layers. Records must cover every
/// (layer, position) for layers 0..L-1 and positions 1..P exactly once.
DistractionCurves distraction_curve(std::span<const AttentionRecord> records);

/// Pointwise mean over examples with identical shapes.
DistractionCurves average_curves(std::span<const DistractionCurves> examples);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation; 0 for fewer than two values
    std::size_t count = 0;
};
MeanStd mean_std(std::span<const double> values);

}  // namespace chunkforge
