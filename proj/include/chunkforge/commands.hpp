#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "chunkforge/config.hpp"
#include "chunkforge/manifest.hpp"

namespace chunkforge::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct SourceSpec {
    std::string name;
    std::vector<std::string> patterns;  // file paths or globs
};

/// Parses "name=glob[,glob...]".
SourceSpec parse_source_spec(const std::string& arg);

struct IngestOptions {
    std::vector<SourceSpec> sources;
    TokenizerSettings tokenizer;
    std::string output;
};

struct PackOptions {
    std::string manifest;
    PackingConfig config;
    std::optional<std::string> stopwords;
    std::string output;
    std::optional<std::string> stats;  // defaults to <output>.stats.json
    std::optional<unsigned> threads;   // defaults to thread_budget()
};

enum class Metric { Zipf, Ngram, ChunkFrequency, Distraction };

struct AnalyzeOptions {
    std::string dataset;
    std::vector<Metric> metrics = {Metric::Zipf, Metric::Ngram, Metric::ChunkFrequency};
    std::vector<std::string> attention;  // one file per example
    std::optional<std::string> report;   // JSON; CSVs are written next to it
    std::optional<std::string> manifest;
    std::optional<TokenId> eos_id;
    bool include_eos = false;
    std::uint64_t min_freq = 1;
    std::vector<std::size_t> ngram_orders = {2, 3, 4};
    std::optional<std::uint64_t> dump;
};

struct BenchOptions {
    std::string manifest;
    std::vector<std::size_t> query_lens = {500};
    std::vector<std::size_t> buffer_sizes = {3072};
    double duration = 10.0;               // seconds per configuration
    std::optional<std::uint64_t> max_tokens;  // stop a configuration after this many packed tokens
    std::size_t length = 2048;
    std::uint64_t seed = 0;
    std::optional<std::string> stopwords;
    std::optional<std::string> output;  // JSON table
    bool strict = false;                 // non-monotone throughput -> exit 1
};

Metric parse_metric(const std::string& name);

int cmd_ingest(const IngestOptions& opts, std::ostream& out, std::ostream& err);
int cmd_pack(const PackOptions& opts, std::ostream& out, std::ostream& err);
int cmd_analyze(const AnalyzeOptions& opts, std::ostream& out, std::ostream& err);
int cmd_bench(const BenchOptions& opts, std::ostream& out, std::ostream& err);

}  // namespace chunkforge::cli
