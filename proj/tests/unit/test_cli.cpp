#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "chunkforge/commands.hpp"
#include "chunkforge/dataset_io.hpp"
#include "chunkforge/metrics.hpp"
#include "generators.hpp"

using namespace chunkforge;
using namespace chunkforge::cli;
using nlohmann::json;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

template <typename Fn, typename Opts>
Run capture(Fn fn, const Opts& opts) {
    std::ostringstream out, err;
    const int code = fn(opts, out, err);
    return {code, out.str(), err.str()};
}

/// Runs the installed binary through the shell; stdout+stderr go to `log`.
int run_binary(const std::string& args, const std::string& log) {
    const std::string cmd = std::string(CHUNKFORGE_CLI_PATH) + " " + args + " >" + log + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json load_json(const std::string& path) { return json::parse(cftest::read_bytes(path)); }

/// Two small sources written as JSONL, ingested into dir/m.json.
std::string make_corpus(const cftest::TempDir& dir, std::size_t docs = 120, std::uint64_t seed = 3) {
    Rng rng(seed);
    cftest::write_word_jsonl(dir.file("a.jsonl"), cftest::random_docs(rng, 0, docs, 1, 60, 0, 200));
    cftest::write_word_jsonl(dir.file("b.jsonl"), cftest::random_docs(rng, 1, docs, 1, 60, 150, 200));
    IngestOptions opts;
    opts.sources = {parse_source_spec("a=" + dir.file("a.jsonl")), parse_source_spec("b=" + dir.file("b.jsonl"))};
    opts.output = dir.file("m.json");
    REQUIRE(capture(cmd_ingest, opts).code == kExitOk);
    return opts.output;
}

PackOptions pack_opts(const std::string& manifest, const std::string& output, Strategy s, std::size_t L = 64) {
    PackOptions p;
    p.manifest = manifest;
    p.output = output;
    p.config.strategy = s;
    p.config.length = L;
    p.config.seed = 21;
    p.config.bm25.buffer_size = 32;
    p.config.bm25.query_len = 16;
    p.threads = 2;
    return p;
}

}  // namespace

TEST_CASE("source spec parsing") {
    const auto s = parse_source_spec("web=a.jsonl,b/*.jsonl");
    CHECK(s.name == "web");
    CHECK(s.patterns == std::vector<std::string>{"a.jsonl", "b/*.jsonl"});
    CHECK_THROWS_AS(parse_source_spec("nofiles="), UsageError);
    CHECK_THROWS_AS(parse_source_spec("=x"), UsageError);
    CHECK_THROWS_AS(parse_source_spec("plain"), UsageError);
    CHECK(parse_metric("chunkfreq") == Metric::ChunkFrequency);
    CHECK_THROWS_AS(parse_metric("perplexity"), UsageError);
}

TEST_CASE("ingest writes a manifest whose weights sum to one") {
    cftest::TempDir dir;
    const auto m = load_json(make_corpus(dir));
    double sum = 0.0;
    for (const auto& s : m["sources"]) sum += s["weight"].get<double>();
    CHECK(std::abs(sum - 1.0) < 1e-12);
    CHECK(m["sources"].size() == 2);
    CHECK(m["sources"][0]["documents"] == 120);
}

TEST_CASE("ingest reproduces seven-source token proportions") {
    cftest::TempDir dir;
    const std::vector<std::pair<std::string, double>> share{{"commoncrawl", 0.522}, {"c4", 0.267},
                                                            {"github", 0.052},      {"books", 0.042},
                                                            {"arxiv", 0.046},       {"wikipedia", 0.038},
                                                            {"stackexchange", 0.033}};
    IngestOptions opts;
    for (const auto& [name, p] : share) {
        const auto tokens = static_cast<std::size_t>(std::llround(p * 20000));
        std::string body;
        for (std::size_t done = 0; done < tokens; done += 10) {
            body += "{\"text\": \"";
            for (std::size_t i = 0; i < std::min<std::size_t>(10, tokens - done); ++i) body += (i ? " w" : "w") + std::to_string(i);
            body += "\"}\n";
        }
        cftest::write_text(dir.file(name + ".jsonl"), body);
        opts.sources.push_back(parse_source_spec(name + "=" + dir.file(name + ".jsonl")));
    }
    opts.output = dir.file("m.json");
    REQUIRE(capture(cmd_ingest, opts).code == kExitOk);
    const auto m = load_json(opts.output);
    for (std::size_t i = 0; i < share.size(); ++i) {
        CHECK(m["sources"][i]["name"] == share[i].first);
        CHECK(std::abs(m["sources"][i]["weight"].get<double>() - share[i].second) < 0.001);
    }
}

TEST_CASE("missing input files exit with a usage error naming the path") {
    cftest::TempDir dir;
    IngestOptions opts;
    opts.sources = {parse_source_spec("a=" + dir.file("absent.jsonl"))};
    opts.output = dir.file("m.json");
    const auto r = capture(cmd_ingest, opts);
    CHECK(r.code == kExitUsage);
    CHECK(r.err.find("absent.jsonl") != std::string::npos);

    CHECK(run_binary("ingest -s a=" + dir.file("absent.jsonl") + " -o " + dir.file("m.json"), dir.file("log")) == 2);
    CHECK(cftest::read_bytes(dir.file("log")).find("absent.jsonl") != std::string::npos);
}

TEST_CASE("malformed input aborts ingest with file and line") {
    cftest::TempDir dir;
    cftest::write_text(dir.file("bad.jsonl"), "{\"text\":\"ok\"}\n{\"text\":\n");
    CHECK(run_binary("ingest -s a=" + dir.file("bad.jsonl") + " -o " + dir.file("m.json"), dir.file("log")) == 1);
    const auto log = cftest::read_bytes(dir.file("log"));
    CHECK(log.find("bad.jsonl:2") != std::string::npos);
}

TEST_CASE("glob patterns expand in sorted order") {
    cftest::TempDir dir;
    cftest::write_text(dir.file("p2.jsonl"), "{\"text\":\"b\"}\n");
    cftest::write_text(dir.file("p1.jsonl"), "{\"text\":\"a\"}\n");
    IngestOptions opts;
    opts.sources = {parse_source_spec("s=" + dir.file("p*.jsonl"))};
    opts.output = dir.file("m.json");
    REQUIRE(capture(cmd_ingest, opts).code == kExitOk);
    const auto files = load_json(opts.output)["sources"][0]["files"];
    REQUIRE(files.size() == 2);
    CHECK(files[0].get<std::string>().find("p1.jsonl") != std::string::npos);
}

TEST_CASE("pack is byte-identical across runs and reports conservation") {
    cftest::TempDir dir;
    const auto manifest = make_corpus(dir);
    for (auto s : {Strategy::Mix, Strategy::Uni, Strategy::Bm25}) {
        const std::string name(to_string(s));
        REQUIRE(capture(cmd_pack, pack_opts(manifest, dir.file(name + "1.bin"), s)).code == kExitOk);
        auto second = pack_opts(manifest, dir.file(name + "2.bin"), s);
        second.threads = 1;
        REQUIRE(capture(cmd_pack, second).code == kExitOk);
        CHECK(cftest::read_bytes(dir.file(name + "1.bin")) == cftest::read_bytes(dir.file(name + "2.bin")));

        const auto stats = load_json(dir.file(name + "1.bin.stats.json"));
        const auto chunks = read_dataset(dir.file(name + "1.bin"));
        CHECK(stats["chunk_count"] == chunks.size());
        std::uint64_t tokens = 0;
        for (const auto& c : chunks) tokens += c.chunk.tokens.size();
        CHECK(stats["emitted_tokens"] == tokens);
        CHECK(stats["emitted_tokens"].get<std::uint64_t>() + stats["dropped_tokens"].get<std::uint64_t>() ==
              stats["doc_tokens"].get<std::uint64_t>() + stats["eos_placed"].get<std::uint64_t>());
        CHECK(stats["token_conservation"] == true);
        if (s != Strategy::Mix) CHECK(stats["mixed_source_chunks"] == 0);
        std::uint64_t by_source = 0;
        for (const auto& [k, v] : stats["chunks_by_source"].items()) by_source += v.get<std::uint64_t>();
        CHECK(by_source + stats["mixed_source_chunks"].get<std::uint64_t>() == chunks.size());
    }
}

TEST_CASE("pack with bm25 defaults stays within the postings bound") {
    cftest::TempDir dir;
    const auto manifest = make_corpus(dir, 400);
    auto opts = pack_opts(manifest, dir.file("d.bin"), Strategy::Bm25, 2048);
    opts.config.bm25 = Bm25Config{};
    REQUIRE(capture(cmd_pack, opts).code == kExitOk);
    const auto stats = load_json(dir.file("d.bin.stats.json"));
    CHECK(stats["bm25"]["buffer_size"] == 3072);
    CHECK(stats["bm25"]["query_len"] == 500);
    CHECK(stats["bm25"]["touched_postings_max"].get<std::uint64_t>() <= 500ULL * 3072ULL);
    CHECK(stats["bm25"]["per_call_bound_violated"] == false);
}

TEST_CASE("invalid packing parameters are usage errors") {
    cftest::TempDir dir;
    const auto manifest = make_corpus(dir, 10);
    const std::string base = "pack -m " + manifest + " -o " + dir.file("x.bin");
    CHECK(run_binary(base + " --strategy shuffle", dir.file("log")) == 2);
    CHECK(run_binary(base + " -L 1", dir.file("log")) == 2);
    CHECK(run_binary(base + " --strategy bm25 --buffer-size 1", dir.file("log")) == 2);
    CHECK(run_binary(base + " --b 2", dir.file("log")) == 2);
    CHECK(run_binary(base + " --mode sideways", dir.file("log")) == 2);
    CHECK(run_binary("pack --bogus", dir.file("log")) == 2);
    CHECK(run_binary("", dir.file("log")) == 2);
    CHECK(run_binary(base + " --strategy uni -L 32", dir.file("log")) == 0);
    CHECK(run_binary("--help", dir.file("log")) == 0);
}

TEST_CASE("analyze matches hand-computed metrics") {
    cftest::TempDir dir;
    DatasetHeader h;
    h.length = 20;
    {
        DatasetWriter w(dir.file("d.bin"), h);
        Chunk a;  // 16 x token 5 then 4 x token 6: alpha = 2, 3 distinct bigrams of 19
        a.tokens.assign(16, 5);
        a.tokens.insert(a.tokens.end(), 4, 6);
        a.segments = {{1, 0, 0, 20, false}};
        w.write(a);
        Chunk b;  // doc [7 8 7 8 7 8 7 8 7] EOS, then ten distinct tokens
        b.tokens = {7, 8, 7, 8, 7, 8, 7, 8, 7, 0, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19};
        b.segments = {{2, 0, 0, 9, false}, {3, 0, 10, 20, false}};
        w.write(b);
        w.finish();
    }
    AnalyzeOptions opts;
    opts.dataset = dir.file("d.bin");
    opts.report = dir.file("report.json");
    opts.ngram_orders = {2};
    REQUIRE(capture(cmd_analyze, opts).code == kExitOk);
    const auto r = load_json(dir.file("report.json"));

    // Chunk b without EOS: frequencies 5, 4, then ten singletons.
    std::vector<double> x, y;
    const std::vector<double> fb{5, 4, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
    for (std::size_t i = 0; i < fb.size(); ++i) {
        x.push_back(std::log(i + 1.0));
        y.push_back(std::log(fb[i]));
    }
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    const double alpha_b = -sxy / sxx;
    CHECK(r["zipf"]["per_chunk"][0].get<double>() == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(r["zipf"]["per_chunk"][1].get<double>() == doctest::Approx(alpha_b).epsilon(1e-12));
    CHECK(r["zipf"]["mean"].get<double>() == doctest::Approx((2.0 + alpha_b) / 2).epsilon(1e-12));

    // Bigrams: a has 3 unique of 19; b has 8 windows in the first doc (2 unique) and 9 in the second (9 unique).
    const double pa = 300.0 / 19.0, pb = 100.0 * 11.0 / 17.0;
    CHECK(r["distinct_ngram_pct"]["2"]["mean"].get<double>() == doctest::Approx((pa + pb) / 2).epsilon(1e-12));
    CHECK(r["chunk_frequency"]["chunks"] == 2);
    CHECK(r["chunk_frequency"]["distinct_tokens"] == 14);
    CHECK(r["chunk_frequency"]["total_memberships"] == 14);

    const auto csv = cftest::read_bytes(dir.file("report.chunks.csv"));
    CHECK(csv.rfind("chunk,segments,zipf_alpha,distinct_2gram_pct\n", 0) == 0);
    CHECK(cftest::read_bytes(dir.file("report.chunk_frequency.csv")).rfind("rank,token,occurrences,chunks\n", 0) == 0);
}

TEST_CASE("analyze flags undefined Zipf fits and skips them in the aggregate") {
    cftest::TempDir dir;
    DatasetHeader h;
    h.length = 4;
    {
        DatasetWriter w(dir.file("d.bin"), h);
        Chunk same;
        same.tokens = {9, 9, 9, 9};
        same.segments = {{1, 0, 0, 4, false}};
        w.write(same);
        Chunk two;
        two.tokens = {5, 5, 5, 6};
        two.segments = {{2, 0, 0, 4, false}};
        w.write(two);
        w.finish();
    }
    AnalyzeOptions opts;
    opts.dataset = dir.file("d.bin");
    opts.metrics = {Metric::Zipf};
    const auto run = capture(cmd_analyze, opts);
    REQUIRE(run.code == kExitOk);
    const auto r = json::parse(run.out);
    CHECK(r["zipf"]["per_chunk"][0].is_null());
    CHECK(r["zipf"]["undefined"] == 1);
    CHECK(r["zipf"]["count"] == 1);
    CHECK(r["zipf"]["mean"].get<double>() == doctest::Approx(std::log(3.0) / std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("analyze distraction on uniform attention equals the baseline") {
    cftest::TempDir dir;
    DatasetHeader h;
    h.length = 2;
    {
        DatasetWriter w(dir.file("d.bin"), h);
        w.finish();
    }
    AttentionFile f;
    f.layers = 2;
    f.prefix_len = 256;
    f.positions = 16;
    for (std::uint32_t l = 0; l < f.layers; ++l) {
        for (std::uint32_t p = 1; p <= f.positions; ++p) f.records.push_back({l, p, 256, std::vector<double>(256 + p, 1.0 / (256 + p))});
    }
    write_attention_file(dir.file("att.cfat"), f);
    AnalyzeOptions opts;
    opts.dataset = dir.file("d.bin");
    opts.metrics = {Metric::Distraction};
    opts.attention = {dir.file("att.cfat"), dir.file("att.cfat")};
    opts.report = dir.file("r.json");
    REQUIRE(capture(cmd_analyze, opts).code == kExitOk);
    const auto r = load_json(dir.file("r.json"));
    for (std::uint32_t p = 1; p <= 16; ++p) {
        CHECK(std::abs(r["distraction"]["layer_average"][p - 1].get<double>() - 256.0 / (256.0 + p)) < 1e-6);
        CHECK(r["distraction"]["uniform_baseline"][p - 1].get<double>() == 256.0 / (256.0 + p));
    }
    CHECK(cftest::read_bytes(dir.file("r.distraction.csv")).rfind("position,layer_average,uniform_baseline,layer_0,layer_1\n", 0) == 0);

    opts.attention.clear();
    CHECK(capture(cmd_analyze, opts).code == kExitUsage);
}

TEST_CASE("analyze --dump prints one chunk") {
    cftest::TempDir dir;
    const auto manifest = make_corpus(dir, 30);
    REQUIRE(capture(cmd_pack, pack_opts(manifest, dir.file("d.bin"), Strategy::Mix, 16)).code == kExitOk);
    const auto chunks = read_dataset(dir.file("d.bin"));
    AnalyzeOptions opts;
    opts.dataset = dir.file("d.bin");
    opts.dump = 1;
    const auto run = capture(cmd_analyze, opts);
    REQUIRE(run.code == kExitOk);
    const auto j = json::parse(run.out);
    CHECK(j["index"] == 1);
    CHECK(j["tokens"].get<std::vector<TokenId>>() == chunks[1].chunk.tokens);
    CHECK(j["cu_seqlens"].get<std::vector<std::uint32_t>>() == chunks[1].meta.cu_seqlens);
    CHECK(j["segment_ids"].get<std::vector<std::uint32_t>>() == chunks[1].meta.segment_ids);
    CHECK(j["source_ids"].size() == chunks[1].chunk.segments.size());

    opts.dump = chunks.size();
    CHECK(capture(cmd_analyze, opts).code == kExitUsage);
}

TEST_CASE("analyze reports corrupt datasets with a byte offset") {
    cftest::TempDir dir;
    const auto manifest = make_corpus(dir, 30);
    REQUIRE(capture(cmd_pack, pack_opts(manifest, dir.file("d.bin"), Strategy::Mix, 16)).code == kExitOk);
    auto bytes = cftest::read_bytes(dir.file("d.bin"));
    bytes.resize(bytes.size() - 1);
    cftest::write_text(dir.file("d.bin"), bytes);
    AnalyzeOptions opts;
    opts.dataset = dir.file("d.bin");
    const auto run = capture(cmd_analyze, opts);
    CHECK(run.code == kExitFailure);
    CHECK(run.err.find("byte offset") != std::string::npos);
}

TEST_CASE("bench reports one row per configuration") {
    cftest::TempDir dir;
    const auto manifest = make_corpus(dir, 60);
    BenchOptions opts;
    opts.manifest = manifest;
    opts.query_lens = {8};
    opts.buffer_sizes = {16};
    opts.length = 32;
    opts.duration = 30;
    const auto run = capture(cmd_bench, opts);
    REQUIRE(run.code == kExitOk);
    std::size_t rows = 0;
    std::istringstream lines(run.out);
    for (std::string line; std::getline(lines, line);) rows += line.rfind("     8     16", 0) == 0;
    CHECK(rows == 1);

    opts.buffer_sizes = {0};
    CHECK(capture(cmd_bench, opts).code == kExitUsage);
    opts.buffer_sizes = {16};
    opts.query_lens = {0};
    CHECK(capture(cmd_bench, opts).code == kExitUsage);
    opts.query_lens = {8};
    opts.duration = 0;
    CHECK(capture(cmd_bench, opts).code == kExitUsage);
}

TEST_CASE("bench touched postings grow with the buffer size") {
    cftest::TempDir dir;
    const auto manifest = make_corpus(dir, 2500);
    BenchOptions opts;
    opts.manifest = manifest;
    opts.query_lens = {64};
    opts.buffer_sizes = {1024, 3072};
    opts.length = 256;
    opts.duration = 600;
    opts.output = dir.file("bench.json");
    REQUIRE(capture(cmd_bench, opts).code == kExitOk);
    const auto rows = load_json(dir.file("bench.json"))["rows"];
    REQUIRE(rows.size() == 2);
    CHECK(rows[0]["corpus_exhausted"] == true);
    CHECK(rows[1]["corpus_exhausted"] == true);
    CHECK(rows[1]["touched_postings_total"].get<std::uint64_t>() >= rows[0]["touched_postings_total"].get<std::uint64_t>());
    CHECK(rows[0]["tokens"] == rows[1]["tokens"]);
}
