#include "chunkforge/commands.hpp"

#include <glob.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <ostream>

#include <fmt/core.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include "chunkforge/bm25.hpp"
#include "chunkforge/dataset_io.hpp"
#include "chunkforge/metrics.hpp"
#include "chunkforge/pipeline.hpp"

namespace chunkforge::cli {

using nlohmann::json;
namespace fs = std::filesystem;

SourceSpec parse_source_spec(const std::string& arg) {
    const auto eq = arg.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == arg.size()) {
        throw UsageError(fmt::format("source '{}' must look like NAME=PATH[,PATH...]", arg));
    }
    SourceSpec spec{arg.substr(0, eq), {}};
    std::string rest = arg.substr(eq + 1);
    std::size_t pos = 0;
    while (pos <= rest.size()) {
        const auto comma = rest.find(',', pos);
        const auto piece = rest.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        if (!piece.empty()) spec.patterns.push_back(piece);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (spec.patterns.empty()) throw UsageError(fmt::format("source '{}' lists no files", spec.name));
    return spec;
}

Metric parse_metric(const std::string& name) {
    if (name == "zipf") return Metric::Zipf;
    if (name == "ngram") return Metric::Ngram;
    if (name == "chunkfreq") return Metric::ChunkFrequency;
    if (name == "distraction") return Metric::Distraction;
    throw UsageError(fmt::format("unknown metric '{}' (expected zipf, ngram, chunkfreq or distraction)", name));
}

namespace {

std::vector<std::string> expand_pattern(const std::string& pattern) {
    glob_t g{};
    const int rc = ::glob(pattern.c_str(), GLOB_TILDE | GLOB_BRACE, nullptr, &g);
    std::vector<std::string> files;
    if (rc == 0) {
        for (std::size_t i = 0; i < g.gl_pathc; ++i) files.emplace_back(g.gl_pathv[i]);
    }
    ::globfree(&g);
    if (rc != 0 && rc != GLOB_NOMATCH) throw Error(fmt::format("cannot expand '{}'", pattern));
    if (files.empty()) throw UsageError(fmt::format("no such file: {}", pattern));
    std::ranges::sort(files);
    for (auto& f : files) f = fs::absolute(f).lexically_normal().string();
    return files;
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const UsageError& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kExitFailure;
    }
}

void write_json(const std::string& path, const json& doc) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(path, "cannot open for writing");
    out << doc.dump(2) << '\n';
    if (!out) throw IoError(path, "write failed");
}

std::shared_ptr<const StopwordSet> load_stopword_ids(const std::optional<std::string>& path, const Vocabulary& vocab) {
    const auto words = path ? load_stopwords(*path) : default_stopwords();
    return std::make_shared<const StopwordSet>(resolve_stopwords(words, vocab));
}

json retrieval_json(const RetrievalStats& s, const Bm25Config& c) {
    return {{"retrieve_calls", s.calls},
            {"touched_postings_total", s.touched_total},
            {"touched_postings_max", s.touched_max},
            {"touched_postings_bound", static_cast<std::uint64_t>(c.query_len) * c.buffer_size},
            {"per_call_bound_ratio_max", s.bound_ratio_max},
            {"per_call_bound_violated", s.bound_violated}};
}

}  // namespace

int cmd_ingest(const IngestOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (opts.sources.empty()) throw UsageError("at least one --source is required");
        if (opts.sources.size() > UINT16_MAX) throw UsageError("too many sources");
        if (opts.output.empty()) throw UsageError("an output manifest path is required");

        std::vector<std::vector<std::string>> files;
        for (const auto& src : opts.sources) {
            std::vector<std::string> all;
            for (const auto& pattern : src.patterns) {
                auto matched = expand_pattern(pattern);
                all.insert(all.end(), matched.begin(), matched.end());
            }
            files.push_back(std::move(all));
        }

        Tokenizer tokenizer = opts.tokenizer.make();
        std::vector<SourcePool> pools;
        for (std::size_t i = 0; i < opts.sources.size(); ++i) {
            pools.push_back(ingest_jsonl_files(files[i], static_cast<SourceId>(i), tokenizer));
        }
        check_unique_doc_ids(pools);
        const auto weights = source_weights(pools);

        Manifest m;
        m.tokenizer = opts.tokenizer;
        if (m.tokenizer.vocab_path) m.tokenizer.vocab_path = fs::absolute(*m.tokenizer.vocab_path).string();
        m.eos_id = tokenizer.eos_id();
        m.unk_id = tokenizer.unk_id();
        m.tokenizer_fingerprint = tokenizer.fingerprint();
        for (std::size_t i = 0; i < pools.size(); ++i) {
            const auto& p = pools[i];
            m.sources.push_back({p.source_id(), opts.sources[i].name, files[i], p.documents().size(), p.total_tokens(),
                                 p.skipped(), weights.at(p.source_id())});
        }
        write_manifest(opts.output, m);
        for (const auto& s : m.sources) {
            fmt::print(out, "{:>16}  docs={:<10} tokens={:<12} skipped={:<6} weight={:.6f}\n", s.name, s.documents,
                       s.tokens, s.skipped, s.weight);
        }
        fmt::print(out, "wrote {}\n", opts.output);
        return kExitOk;
    });
}

int cmd_pack(const PackOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (opts.output.empty()) throw UsageError("an output dataset path is required");
        PackingConfig config = opts.config;
        config.validate();
        const Manifest manifest = read_manifest(opts.manifest);
        LoadedCorpus corpus = load_corpus(manifest);
        config.eos_id = corpus.tokenizer.eos_id();

        std::shared_ptr<const StopwordSet> stopwords;
        if (config.strategy == Strategy::Bm25) stopwords = load_stopword_ids(opts.stopwords, corpus.tokenizer.vocab());

        DatasetHeader header;
        header.length = static_cast<std::uint32_t>(config.length);
        header.strategy = config.strategy;
        header.seed = config.seed;
        header.tokenizer_fingerprint = corpus.tokenizer.fingerprint();
        DatasetWriter writer(opts.output, header);

        const unsigned threads = opts.threads.value_or(thread_budget());
        const auto summary =
            pack_corpus(corpus.pools, config, stopwords, [&](const Chunk& c) { writer.write(c); }, threads);
        writer.finish();

        json by_source = json::object();
        for (const auto& src : manifest.sources) {
            auto it = summary.chunks_by_source.find(src.source_id);
            by_source[src.name] = it == summary.chunks_by_source.end() ? 0 : it->second;
        }
        const auto& t = summary.tally;
        json stats = {{"dataset", opts.output},
                      {"strategy", std::string(to_string(config.strategy))},
                      {"length", config.length},
                      {"seed", config.seed},
                      {"batch_size", config.batch_size},
                      {"remainder", std::string(to_string(config.remainder))},
                      {"intra_eos", std::string(to_string(config.separator))},
                      {"chunk_count", summary.chunks},
                      {"batches", summary.batches},
                      {"short_final_batch", summary.short_final_batch},
                      {"docs_consumed", t.docs_consumed},
                      {"doc_tokens", t.doc_tokens},
                      {"eos_placed", t.eos_placed},
                      {"dropped_tokens", t.dropped_tokens},
                      {"emitted_tokens", t.emitted_tokens},
                      {"token_conservation", t.conserved()},
                      {"mixed_source_chunks", summary.mixed_source_chunks},
                      {"chunks_by_source", by_source}};
        if (config.strategy == Strategy::Bm25) {
            stats["bm25"] = {{"buffer_size", config.bm25.buffer_size},
                             {"query_len", config.bm25.query_len},
                             {"k1", config.bm25.k1},
                             {"b", config.bm25.b},
                             {"mode", std::string(to_string(config.bm25.mode))},
                             {"stopword_ids", stopwords ? stopwords->size() : 0}};
            if (summary.retrieval) stats["bm25"].update(retrieval_json(*summary.retrieval, config.bm25));
        }
        const std::string stats_path = opts.stats.value_or(opts.output + ".stats.json");
        write_json(stats_path, stats);
        fmt::print(out, "packed {} chunks of {} tokens ({} dropped) into {}\n", summary.chunks, config.length,
                   t.dropped_tokens, opts.output);
        if (!t.conserved()) {
            fmt::print(err, "error: token conservation violated\n");
            return kExitFailure;
        }
        return kExitOk;
    });
}

namespace {

json dump_chunk(const DecodedChunk& d, std::uint64_t index) {
    std::vector<std::uint16_t> sources;
    std::vector<std::uint64_t> docs;
    std::vector<bool> cont;
    for (const auto& s : d.chunk.segments) {
        sources.push_back(s.source_id);
        docs.push_back(s.doc_id);
        cont.push_back(s.is_continuation);
    }
    return {{"index", index},
            {"tokens", d.chunk.tokens},
            {"cu_seqlens", d.meta.cu_seqlens},
            {"segment_ids", d.meta.segment_ids},
            {"max_seqlen", d.meta.max_seqlen},
            {"source_ids", sources},
            {"doc_ids", docs},
            {"is_continuation", cont}};
}

std::string sibling(const std::string& report, const std::string& suffix) {
    fs::path p(report);
    return (p.parent_path() / (p.stem().string() + suffix)).string();
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

int cmd_analyze(const AnalyzeOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        TokenId eos = 0;
        if (opts.eos_id) {
            eos = *opts.eos_id;
        } else if (opts.manifest) {
            eos = read_manifest(*opts.manifest).eos_id;
        }
        const auto has = [&](Metric m) { return std::ranges::find(opts.metrics, m) != opts.metrics.end(); };
        if (has(Metric::Distraction) && opts.attention.empty()) {
            throw UsageError("--metrics distraction needs at least one --attention file");
        }
        for (auto n : opts.ngram_orders) {
            if (n == 0) throw UsageError("n-gram orders must be positive");
        }

        DatasetReader reader(opts.dataset, eos);
        if (opts.dump) {
            if (*opts.dump >= reader.header().chunk_count) {
                throw UsageError(fmt::format("chunk {} out of range ({} chunks)", *opts.dump,
                                             reader.header().chunk_count));
            }
            while (auto d = reader.next()) {
                if (reader.index() - 1 == *opts.dump) {
                    out << dump_chunk(*d, *opts.dump).dump() << '\n';
                    return kExitOk;
                }
            }
        }

        const std::optional<TokenId> skip = opts.include_eos ? std::nullopt : std::optional<TokenId>(eos);
        std::vector<std::optional<double>> zipf;
        std::vector<std::vector<std::optional<double>>> ngrams(opts.ngram_orders.size());
        std::vector<std::size_t> segments;
        ChunkFrequency chunk_freq(skip);
        while (auto d = reader.next()) {
            const auto& tokens = d->chunk.tokens;
            segments.push_back(d->chunk.segments.size());
            if (has(Metric::Zipf)) {
                try {
                    zipf.emplace_back(zipf_coefficient(tokens, skip, opts.min_freq));
                } catch (const UndefinedFitError&) {
                    zipf.emplace_back(std::nullopt);
                }
            }
            if (has(Metric::Ngram)) {
                for (std::size_t k = 0; k < opts.ngram_orders.size(); ++k) {
                    try {
                        ngrams[k].emplace_back(distinct_ngram_pct(tokens, opts.ngram_orders[k], skip));
                    } catch (const UsageError&) {
                        throw;
                    } catch (const Error&) {
                        ngrams[k].emplace_back(std::nullopt);
                    }
                }
            }
            if (has(Metric::ChunkFrequency)) chunk_freq.add_chunk(tokens);
        }
        const auto& h = reader.header();

        auto summarize = [](const std::vector<std::optional<double>>& vals) {
            std::vector<double> defined;
            for (const auto& v : vals) {
                if (v) defined.push_back(*v);
            }
            const auto ms = mean_std(defined);
            json j = {{"mean", ms.mean}, {"std", ms.std}, {"count", ms.count},
                      {"undefined", vals.size() - defined.size()}};
            if (defined.empty()) j["mean"] = nullptr;
            return j;
        };

        json report = {{"dataset",
                        {{"path", opts.dataset},
                         {"length", h.length},
                         {"chunk_count", h.chunk_count},
                         {"strategy", std::string(to_string(h.strategy))},
                         {"seed", h.seed},
                         {"tokenizer_fingerprint", fmt::format("{:016x}", h.tokenizer_fingerprint)}}},
                       {"eos_id", eos},
                       {"eos_excluded", !opts.include_eos}};
        if (has(Metric::Zipf)) {
            report["zipf"] = summarize(zipf);
            report["zipf"]["min_freq"] = opts.min_freq;
            json per = json::array();
            for (const auto& v : zipf) per.push_back(optional_number(v));
            report["zipf"]["per_chunk"] = per;
        }
        if (has(Metric::Ngram)) {
            json j = json::object();
            for (std::size_t k = 0; k < opts.ngram_orders.size(); ++k) {
                j[std::to_string(opts.ngram_orders[k])] = summarize(ngrams[k]);
            }
            report["distinct_ngram_pct"] = j;
        }
        std::vector<ChunkFrequency::CurvePoint> curve;
        if (has(Metric::ChunkFrequency)) {
            curve = chunk_freq.curve();
            std::vector<std::uint64_t> counts;
            counts.reserve(curve.size());
            for (const auto& p : curve) counts.push_back(p.chunks);
            report["chunk_frequency"] = {{"chunks", chunk_freq.chunk_count()},
                                         {"distinct_tokens", curve.size()},
                                         {"total_memberships", chunk_freq.total_memberships()},
                                         {"by_rank", counts}};
        }
        std::optional<DistractionCurves> distraction;
        if (has(Metric::Distraction)) {
            std::vector<DistractionCurves> examples;
            for (const auto& path : opts.attention) {
                const auto file = read_attention_file(path);
                examples.push_back(distraction_curve(file.records));
            }
            distraction = average_curves(examples);
            std::vector<double> baseline;
            for (std::uint32_t p = 1; p <= distraction->layer_average.size(); ++p) {
                baseline.push_back(uniform_distraction_baseline(distraction->prefix_len, p));
            }
            report["distraction"] = {{"examples", examples.size()},
                                     {"prefix_len", distraction->prefix_len},
                                     {"layers", distraction->per_layer.size()},
                                     {"positions", distraction->layer_average.size()},
                                     {"layer_average", distraction->layer_average},
                                     {"per_layer", distraction->per_layer},
                                     {"uniform_baseline", baseline}};
        }

        if (!opts.report) {
            out << report.dump(2) << '\n';
            return kExitOk;
        }
        write_json(*opts.report, report);

        {
            std::ofstream csv(sibling(*opts.report, ".chunks.csv"));
            csv << "chunk,segments,zipf_alpha";
            for (auto n : opts.ngram_orders) csv << ",distinct_" << n << "gram_pct";
            csv << '\n';
            for (std::size_t i = 0; i < segments.size(); ++i) {
                csv << i << ',' << segments[i] << ',';
                if (i < zipf.size() && zipf[i]) csv << fmt::format("{:.9g}", *zipf[i]);
                for (std::size_t k = 0; k < opts.ngram_orders.size(); ++k) {
                    csv << ',';
                    if (i < ngrams[k].size() && ngrams[k][i]) csv << fmt::format("{:.9g}", *ngrams[k][i]);
                }
                csv << '\n';
            }
        }
        if (has(Metric::ChunkFrequency)) {
            std::ofstream csv(sibling(*opts.report, ".chunk_frequency.csv"));
            csv << "rank,token,occurrences,chunks\n";
            for (const auto& p : curve) csv << p.rank << ',' << p.token << ',' << p.occurrences << ',' << p.chunks << '\n';
        }
        if (distraction) {
            std::ofstream csv(sibling(*opts.report, ".distraction.csv"));
            csv << "position,layer_average,uniform_baseline";
            for (std::size_t l = 0; l < distraction->per_layer.size(); ++l) csv << ",layer_" << l;
            csv << '\n';
            for (std::size_t p = 0; p < distraction->layer_average.size(); ++p) {
                csv << p + 1 << ',' << fmt::format("{:.9g}", distraction->layer_average[p]) << ','
                    << fmt::format("{:.9g}", uniform_distraction_baseline(distraction->prefix_len,
                                                                          static_cast<std::uint32_t>(p + 1)));
                for (const auto& layer : distraction->per_layer) csv << ',' << fmt::format("{:.9g}", layer[p]);
                csv << '\n';
            }
        }
        fmt::print(out, "analyzed {} chunks; report written to {}\n", segments.size(), *opts.report);
        return kExitOk;
    });
}

int cmd_bench(const BenchOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (opts.query_lens.empty() || opts.buffer_sizes.empty()) throw UsageError("empty (q, k) sweep");
        for (auto q : opts.query_lens) {
            if (q == 0) throw UsageError("query lengths must be positive");
        }
        for (auto k : opts.buffer_sizes) {
            if (k < 2) throw UsageError("buffer sizes must be >= 2");
        }
        if (!(opts.duration > 0.0)) throw UsageError("duration must be positive");

        const Manifest manifest = read_manifest(opts.manifest);
        const LoadedCorpus corpus = load_corpus(manifest);
        const auto stopwords = load_stopword_ids(opts.stopwords, corpus.tokenizer.vocab());
        const auto weights = source_weights(corpus.pools);

        struct Row {
            std::size_t q, k;
            std::uint64_t tokens;
            double seconds;
            double throughput;
            RetrievalStats stats;
            bool exhausted;
        };
        std::vector<Row> rows;
        for (auto q : opts.query_lens) {
            for (auto k : opts.buffer_sizes) {
                PackingConfig config;
                config.length = opts.length;
                config.strategy = Strategy::Bm25;
                config.seed = opts.seed;
                config.eos_id = corpus.tokenizer.eos_id();
                config.bm25.query_len = q;
                config.bm25.buffer_size = k;
                config.validate();

                std::vector<SourcePool> pools = corpus.pools;
                std::map<SourceId, std::unique_ptr<ChunkStream>> streams;
                for (auto& p : pools) streams.emplace(p.source_id(), std::make_unique<Bm25Stream>(p, config, stopwords));
                BatchComposer composer(std::move(streams), weights, config.batch_size, composer_seed(config.seed));

                const auto start = std::chrono::steady_clock::now();
                std::uint64_t tokens = 0;
                double elapsed = 0.0;
                bool exhausted = true;
                while (auto batch = composer.next_batch()) {
                    for (const auto& c : batch->chunks) tokens += c.tokens.size();
                    elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
                    if (elapsed >= opts.duration || (opts.max_tokens && tokens >= *opts.max_tokens)) {
                        exhausted = false;
                        break;
                    }
                }
                elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
                const auto stats = composer.retrieval_stats().value_or(RetrievalStats{});
                rows.push_back({q, k, tokens, elapsed, elapsed > 0 ? static_cast<double>(tokens) / elapsed : 0.0,
                                stats, exhausted});
            }
        }

        fmt::print(out, "{:>6} {:>6} {:>12} {:>9} {:>12} {:>16} {:>12}\n", "q", "k", "tokens", "seconds",
                   "tokens/s", "touched_total", "touched_max");
        for (const auto& r : rows) {
            fmt::print(out, "{:>6} {:>6} {:>12} {:>9.3f} {:>12.0f} {:>16} {:>12}\n", r.q, r.k, r.tokens, r.seconds,
                       r.throughput, r.stats.touched_total, r.stats.touched_max);
        }

        // Throughput should not rise as q*k grows (20% noise allowance).
        std::vector<const Row*> order;
        for (const auto& r : rows) order.push_back(&r);
        std::ranges::stable_sort(order, {}, [](const Row* r) { return r->q * r->k; });
        bool monotone = true;
        for (std::size_t i = 0; i < order.size(); ++i) {
            for (std::size_t j = i + 1; j < order.size(); ++j) {
                if (order[j]->q * order[j]->k > order[i]->q * order[i]->k &&
                    order[j]->throughput > 1.2 * order[i]->throughput) {
                    monotone = false;
                }
            }
        }
        bool bound_ok = true;
        for (const auto& r : rows) bound_ok = bound_ok && !r.stats.bound_violated;
        fmt::print(out, "throughput monotone in q*k (20% tolerance): {}\n", monotone ? "yes" : "NO");
        fmt::print(out, "touched postings within |query| * k on every call: {}\n", bound_ok ? "yes" : "NO");

        if (opts.output) {
            json table = json::array();
            for (const auto& r : rows) {
                table.push_back({{"query_len", r.q},
                                 {"buffer_size", r.k},
                                 {"tokens", r.tokens},
                                 {"seconds", r.seconds},
                                 {"tokens_per_second", r.throughput},
                                 {"retrieve_calls", r.stats.calls},
                                 {"touched_postings_total", r.stats.touched_total},
                                 {"touched_postings_max", r.stats.touched_max},
                                 {"per_call_bound_violated", r.stats.bound_violated},
                                 {"corpus_exhausted", r.exhausted}});
            }
            write_json(*opts.output, {{"rows", table}, {"monotone", monotone}, {"bound_ok", bound_ok}});
        }
        if (!bound_ok) return kExitFailure;
        if (opts.strict && !monotone) return kExitFailure;
        return kExitOk;
    });
}

}  // namespace chunkforge::cli
