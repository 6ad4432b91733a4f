#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "chunkforge/commands.hpp"

using namespace chunkforge;
using namespace chunkforge::cli;

int main(int argc, char** argv) {
    CLI::App app{"chunkforge: corpus ingestion, chunk packing and chunk analysis"};
    app.require_subcommand(1);

    // ingest
    IngestOptions ingest;
    std::vector<std::string> source_args;
    std::string tokenizer_kind = "whitespace-punct";
    std::optional<std::string> vocab;
    std::optional<TokenId> eos_id, unk_id;
    auto* ing = app.add_subcommand("ingest", "Tokenize JSONL sources and write a corpus manifest");
    ing->add_option("-s,--source", source_args, "NAME=PATH[,PATH...] (globs allowed), repeatable")->required();
    ing->add_option("--tokenizer", tokenizer_kind, "whitespace-punct | external-vocab")->capture_default_str();
    ing->add_option("--vocab", vocab, "Vocabulary file, one token per line (for --tokenizer external-vocab)");
    ing->add_option("--eos-id", eos_id, "EOS token id");
    ing->add_option("--unk-id", unk_id, "Unknown-token id");
    ing->add_option("-o,--output", ingest.output, "Manifest path")->required();

    // pack
    PackOptions pack;
    std::string strategy = "mix", remainder = "keep", intra_eos = "keep", mode = "multi_hop";
    std::size_t length = 2048;
    std::uint64_t seed = 0;
    std::size_t batch_size = 8, buffer_size = 3072, query_len = 500;
    double k1 = 1.2, b = 0.75;
    auto* pk = app.add_subcommand("pack", "Pack a manifest's corpus into a chunk dataset");
    pk->add_option("-m,--manifest", pack.manifest, "Manifest written by ingest")->required();
    pk->add_option("--strategy", strategy, "mix | uni | bm25")->capture_default_str();
    pk->add_option("-L,--length", length, "Chunk length in tokens")->capture_default_str();
    pk->add_option("--seed", seed, "Random seed")->capture_default_str();
    pk->add_option("--batch-size", batch_size, "Chunks per batch")->capture_default_str();
    pk->add_option("--remainder", remainder, "keep | drop: what happens to a split document's suffix")
        ->capture_default_str();
    pk->add_option("--intra-eos", intra_eos, "keep | strip: EOS between documents")->capture_default_str();
    pk->add_option("--buffer-size", buffer_size, "BM25 document buffer size k")->capture_default_str();
    pk->add_option("--query-len", query_len, "BM25 query length q")->capture_default_str();
    pk->add_option("--k1", k1, "BM25 k1")->capture_default_str();
    pk->add_option("--b", b, "BM25 b")->capture_default_str();
    pk->add_option("--mode", mode, "multi_hop | one_hop")->capture_default_str();
    pk->add_option("--stopwords", pack.stopwords, "Stopword file, one word per line");
    pk->add_option("--stats", pack.stats, "Stats JSON path (default: OUTPUT.stats.json)");
    pk->add_option("--threads", pack.threads, "Worker threads (default: CHUNKFORGE_THREADS or all cores)");
    pk->add_option("-o,--output", pack.output, "Dataset path")->required();

    // analyze
    AnalyzeOptions analyze;
    std::vector<std::string> metric_names;
    auto* an = app.add_subcommand("analyze", "Compute chunk metrics over a dataset");
    an->add_option("dataset", analyze.dataset, "Chunk dataset")->required();
    an->add_option("--metrics", metric_names, "zipf, ngram, chunkfreq, distraction")->delimiter(',');
    an->add_option("--attention", analyze.attention, "Attention score file, repeatable");
    an->add_option("-o,--report", analyze.report, "Report JSON path (CSVs are written alongside)");
    an->add_option("--manifest", analyze.manifest, "Manifest used to look up the EOS id");
    an->add_option("--eos-id", analyze.eos_id, "EOS id (default 0, or from --manifest)");
    an->add_flag("--include-eos", analyze.include_eos, "Count EOS tokens in the metrics");
    an->add_option("--min-freq", analyze.min_freq, "Ignore ranks below this frequency in Zipf fits")
        ->capture_default_str();
    an->add_option("--ngram", analyze.ngram_orders, "n-gram orders")->delimiter(',');
    an->add_option("--dump", analyze.dump, "Print chunk N as JSON and exit");

    // bench
    BenchOptions bench;
    auto* bn = app.add_subcommand("bench", "Measure bm25 packing throughput over a (q, k) sweep");
    bn->add_option("-m,--manifest", bench.manifest, "Manifest written by ingest")->required();
    bn->add_option("--query-len", bench.query_lens, "Query lengths")->delimiter(',');
    bn->add_option("--buffer-size", bench.buffer_sizes, "Buffer sizes")->delimiter(',');
    bn->add_option("--duration", bench.duration, "Seconds per configuration")->capture_default_str();
    bn->add_option("--max-tokens", bench.max_tokens, "Stop each configuration after this many tokens");
    bn->add_option("-L,--length", bench.length, "Chunk length")->capture_default_str();
    bn->add_option("--seed", bench.seed, "Random seed")->capture_default_str();
    bn->add_option("--stopwords", bench.stopwords, "Stopword file");
    bn->add_option("-o,--output", bench.output, "JSON table path");
    bn->add_flag("--strict", bench.strict, "Fail when throughput is not monotone in q*k");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*ing) {
            for (const auto& s : source_args) ingest.sources.push_back(parse_source_spec(s));
            ingest.tokenizer.kind = parse_tokenizer_kind(tokenizer_kind);
            ingest.tokenizer.vocab_path = vocab;
            ingest.tokenizer.eos_id = eos_id;
            ingest.tokenizer.unk_id = unk_id;
            return cmd_ingest(ingest, std::cout, std::cerr);
        }
        if (*pk) {
            auto& c = pack.config;
            c.strategy = parse_strategy(strategy);
            c.length = length;
            c.seed = seed;
            c.batch_size = batch_size;
            c.remainder = parse_remainder(remainder);
            c.separator = parse_separator(intra_eos);
            c.bm25.buffer_size = buffer_size;
            c.bm25.query_len = query_len;
            c.bm25.k1 = k1;
            c.bm25.b = b;
            c.bm25.mode = parse_bm25_mode(mode);
            return cmd_pack(pack, std::cout, std::cerr);
        }
        if (*an) {
            if (!metric_names.empty()) {
                analyze.metrics.clear();
                for (const auto& m : metric_names) analyze.metrics.push_back(parse_metric(m));
            }
            return cmd_analyze(analyze, std::cout, std::cerr);
        }
        if (*bn) return cmd_bench(bench, std::cout, std::cerr);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}
