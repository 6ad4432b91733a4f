#include "chunkforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_set>

#include <fmt/core.h>

namespace chunkforge {

RankFrequency rank_frequency(std::span<const TokenId> tokens, std::optional<TokenId> exclude) {
    std::unordered_map<TokenId, std::size_t> index;
    RankFrequency rf;
    for (TokenId t : tokens) {
        if (exclude && t == *exclude) continue;
        auto [it, inserted] = index.emplace(t, rf.entries.size());
        if (inserted) {
            rf.entries.push_back({t, 1});
        } else {
            ++rf.entries[it->second].frequency;
        }
    }
    // Stable sort keeps first-occurrence order among equal frequencies.
    std::ranges::stable_sort(rf.entries, std::greater<>{}, &RankFrequency::Entry::frequency);
    return rf;
}

double fit_zipf(const RankFrequency& rf, std::uint64_t min_freq) {
    std::vector<double> xs;
    std::vector<double> ys;
    for (std::size_t r = 0; r < rf.entries.size(); ++r) {
        if (rf.entries[r].frequency < min_freq) continue;
        xs.push_back(std::log(static_cast<double>(r + 1)));
        ys.push_back(std::log(static_cast<double>(rf.entries[r].frequency)));
    }
    if (xs.size() < 2) {
        throw UndefinedFitError(fmt::format("Zipf fit needs at least 2 distinct tokens (got {})", xs.size()));
    }
    const auto n = static_cast<double>(xs.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    const double alpha = -sxy / sxx;
    return alpha == 0.0 ? 0.0 : alpha;
}

double zipf_coefficient(std::span<const TokenId> tokens, std::optional<TokenId> exclude, std::uint64_t min_freq) {
    return fit_zipf(rank_frequency(tokens, exclude), min_freq);
}

namespace {
struct SpanHash {
    std::size_t operator()(std::span<const TokenId> s) const noexcept {
        std::uint64_t h = 0xCBF29CE484222325ULL;
        for (TokenId t : s) {
            h ^= t;
            h *= 0x100000001B3ULL;
        }
        return static_cast<std::size_t>(h);
    }
};
struct SpanEq {
    bool operator()(std::span<const TokenId> a, std::span<const TokenId> b) const noexcept {
        return std::ranges::equal(a, b);
    }
};
}  // namespace

double distinct_ngram_pct(std::span<const TokenId> tokens, std::size_t n, std::optional<TokenId> skip) {
    if (n == 0) throw UsageError("n-gram order must be positive");
    if (tokens.size() < n) {
        throw Error(fmt::format("sequence of {} tokens is too short for {}-grams", tokens.size(), n));
    }
    std::unordered_set<std::span<const TokenId>, SpanHash, SpanEq> unique;
    std::size_t windows = 0;
    std::size_t last_skip = 0;  // one past the latest skipped position
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (skip && tokens[i] == *skip) last_skip = i + 1;
        if (i + 1 < n) continue;
        const std::size_t begin = i + 1 - n;
        if (begin < last_skip) continue;
        ++windows;
        unique.insert(tokens.subspan(begin, n));
    }
    if (windows == 0) throw Error(fmt::format("no {}-gram windows without the excluded token", n));
    return 100.0 * static_cast<double>(unique.size()) / static_cast<double>(windows);
}

void ChunkFrequency::add_chunk(std::span<const TokenId> tokens) {
    ++chunks_;
    for (TokenId t : tokens) {
        if (exclude_ && t == *exclude_) continue;
        auto [it, inserted] = stats_.try_emplace(t);
        Stat& s = it->second;
        if (inserted) s.first_seen = seen_++;
        ++s.occurrences;
        if (s.chunks == 0 || s.last_chunk != chunks_) {
            ++s.chunks;
            s.last_chunk = chunks_;
        }
    }
}

std::vector<ChunkFrequency::CurvePoint> ChunkFrequency::curve() const {
    std::vector<std::pair<TokenId, const Stat*>> order;
    order.reserve(stats_.size());
    for (const auto& [t, s] : stats_) order.emplace_back(t, &s);
    std::ranges::sort(order, [](const auto& a, const auto& b) {
        if (a.second->occurrences != b.second->occurrences) return a.second->occurrences > b.second->occurrences;
        return a.second->first_seen < b.second->first_seen;
    });
    std::vector<CurvePoint> out;
    out.reserve(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        out.push_back({i + 1, order[i].first, order[i].second->occurrences, order[i].second->chunks});
    }
    return out;
}

std::uint64_t ChunkFrequency::chunks_containing(TokenId t) const {
    auto it = stats_.find(t);
    return it == stats_.end() ? 0 : it->second.chunks;
}

std::uint64_t ChunkFrequency::total_memberships() const noexcept {
    std::uint64_t total = 0;
    for (const auto& [t, s] : stats_) total += s.chunks;
    return total;
}

double distraction_proportion(const AttentionRecord& record) {
    const std::size_t expected = static_cast<std::size_t>(record.prefix_len) + record.position;
    if (record.position < 1 || record.scores.size() != expected) {
        throw Error(fmt::format("attention row (layer {}, position {}) has {} scores, expected {}", record.layer,
                                record.position, record.scores.size(), expected));
    }
    double total = 0.0;
    double prefix = 0.0;
    for (std::size_t i = 0; i < record.scores.size(); ++i) {
        total += record.scores[i];
        if (i < record.prefix_len) prefix += record.scores[i];
    }
    if (std::abs(total - 1.0) > kAttentionNormTolerance) {
        throw Error(fmt::format("attention row (layer {}, position {}) sums to {:.9f}, not 1", record.layer,
                                record.position, total));
    }
    return prefix;
}

double uniform_distraction_baseline(std::uint32_t prefix_len, std::uint32_t position) {
    return static_cast<double>(prefix_len) / (static_cast<double>(prefix_len) + static_cast<double>(position));
}

DistractionCurves distraction_curve(std::span<const AttentionRecord> records) {
    if (records.empty()) throw Error("no attention records");
    std::uint32_t layers = 0;
    std::uint32_t positions = 0;
    const std::uint32_t prefix = records.front().prefix_len;
    for (const auto& r : records) {
        if (r.prefix_len != prefix) throw Error("attention records disagree on the prefix length");
        layers = std::max(layers, r.layer + 1);
        positions = std::max(positions, r.position);
    }
    DistractionCurves out;
    out.prefix_len = prefix;
    out.per_layer.assign(layers, std::vector<double>(positions, 0.0));
    std::vector<std::vector<std::uint8_t>> seen(layers, std::vector<std::uint8_t>(positions, 0));
    for (const auto& r : records) {
        if (r.position < 1) throw Error(fmt::format("attention position must be >= 1 (layer {})", r.layer));
        auto& flag = seen[r.layer][r.position - 1];
        if (flag) throw Error(fmt::format("duplicate attention row (layer {}, position {})", r.layer, r.position));
        flag = 1;
        out.per_layer[r.layer][r.position - 1] = distraction_proportion(r);
    }
    std::vector<std::string> missing;
    for (std::uint32_t l = 0; l < layers; ++l) {
        for (std::uint32_t p = 0; p < positions; ++p) {
            if (!seen[l][p]) missing.push_back(fmt::format("({}, {})", l, p + 1));
        }
    }
    if (!missing.empty()) {
        std::string list;
        for (std::size_t i = 0; i < missing.size() && i < 20; ++i) list += (i ? " " : "") + missing[i];
        if (missing.size() > 20) list += fmt::format(" ... ({} total)", missing.size());
        throw Error("attention records missing (layer, position): " + list);
    }
    out.layer_average.assign(positions, 0.0);
    for (std::uint32_t p = 0; p < positions; ++p) {
        double sum = 0.0;
        for (std::uint32_t l = 0; l < layers; ++l) sum += out.per_layer[l][p];
        out.layer_average[p] = sum / static_cast<double>(layers);
    }
    return out;
}

DistractionCurves average_curves(std::span<const DistractionCurves> examples) {
    if (examples.empty()) throw Error("no distraction curves to average");
    DistractionCurves out = examples.front();
    for (std::size_t e = 1; e < examples.size(); ++e) {
        const auto& ex = examples[e];
        if (ex.per_layer.size() != out.per_layer.size() || ex.layer_average.size() != out.layer_average.size() ||
            ex.prefix_len != out.prefix_len) {
            throw Error(fmt::format("attention example {} has a different shape", e));
        }
        for (std::size_t l = 0; l < out.per_layer.size(); ++l) {
            for (std::size_t p = 0; p < out.per_layer[l].size(); ++p) out.per_layer[l][p] += ex.per_layer[l][p];
        }
        for (std::size_t p = 0; p < out.layer_average.size(); ++p) out.layer_average[p] += ex.layer_average[p];
    }
    const auto n = static_cast<double>(examples.size());
    for (auto& layer : out.per_layer) {
        for (auto& v : layer) v /= n;
    }
    for (auto& v : out.layer_average) v /= n;
    return out;
}

MeanStd mean_std(std::span<const double> values) {
    MeanStd out;
    out.count = values.size();
    if (values.empty()) return out;
    double sum = 0.0;
    for (double v : values) sum += v;
    out.mean = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - out.mean) * (v - out.mean);
        out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return out;
}

}  // namespace chunkforge
