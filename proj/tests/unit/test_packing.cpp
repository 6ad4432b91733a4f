#include <doctest.h>

#include <cmath>
#include <set>

#include "chunkforge/pipeline.hpp"
#include "generators.hpp"
#include "oracles.hpp"

using namespace chunkforge;

namespace {

constexpr TokenId kEos = 0;

Document make_doc(DocId id, std::size_t len, TokenId first = 10, SourceId source = 0) {
    Document d{id, source, {}};
    for (std::size_t i = 0; i < len; ++i) d.tokens.push_back(first + static_cast<TokenId>(i));
    return d;
}

DocSupplier from_list(const std::vector<const Document*>& docs) {
    auto pos = std::make_shared<std::size_t>(0);
    return [docs, pos]() -> const Document* { return *pos < docs.size() ? docs[(*pos)++] : nullptr; };
}

/// Never-ending stream of one-segment chunks labelled with its source.
class EndlessStream final : public ChunkStream {
public:
    EndlessStream(SourceId source, std::uint64_t limit = UINT64_MAX) : source_(source), limit_(limit) {}
    std::optional<Chunk> next() override {
        if (made_ == limit_) return std::nullopt;
        ++made_;
        Chunk c;
        c.tokens = {5, 6};
        c.segments.push_back({made_, source_, 0, 2, false});
        return c;
    }
    PackingTally tally() const override { return {}; }

private:
    SourceId source_;
    std::uint64_t limit_;
    std::uint64_t made_ = 0;
};

std::map<SourceId, std::unique_ptr<ChunkStream>> endless(std::initializer_list<SourceId> ids) {
    std::map<SourceId, std::unique_ptr<ChunkStream>> m;
    for (auto id : ids) m.emplace(id, std::make_unique<EndlessStream>(id));
    return m;
}

}  // namespace

TEST_CASE("split rule: lengths 3 and 5 into L=6") {
    const auto d1 = make_doc(1, 3, 10), d2 = make_doc(2, 5, 20);
    ChunkBuilder b(6, kEos);
    auto supply = from_list({&d1, &d2});
    auto c = b.build(supply);
    REQUIRE(c);
    CHECK(c->tokens == std::vector<TokenId>{10, 11, 12, kEos, 20, 21});
    REQUIRE(c->segments.size() == 2);
    CHECK(c->segments[0] == Segment{1, 0, 0, 3, false});
    CHECK(c->segments[1] == Segment{2, 0, 4, 6, false});
    CHECK(b.carry_document() == &d2);
    CHECK(b.carry_offset() == 2);
}

TEST_CASE("13-token document with L=5") {
    const auto d = make_doc(7, 13);
    ChunkBuilder b(5, kEos);
    auto supply = from_list({&d});
    auto c1 = b.build(supply);
    auto c2 = b.build(supply);
    REQUIRE(c1);
    REQUIRE(c2);
    CHECK(c1->tokens.size() == 5);
    CHECK(c2->segments == std::vector<Segment>{{7, 0, 0, 5, true}});
    CHECK(c2->tokens.front() == 15);
    CHECK_FALSE(b.build(supply));
    CHECK_FALSE(b.build(supply));
    CHECK(b.exhausted());
    const auto& t = b.tally();
    CHECK(t.chunks == 2);
    CHECK(t.dropped_tokens == 4);  // 3 tokens + EOS
    CHECK(t.eos_placed == 1);
    CHECK(t.conserved());
}

TEST_CASE("document of exactly L tokens has no EOS") {
    const auto d = make_doc(1, 8);
    ChunkBuilder b(8, kEos);
    auto supply = from_list({&d});
    auto c = b.build(supply);
    REQUIRE(c);
    CHECK(std::count(c->tokens.begin(), c->tokens.end(), kEos) == 0);
    CHECK(c->segments.size() == 1);
    CHECK(b.carry_document() == nullptr);
    CHECK_FALSE(b.build(supply));
    CHECK(b.tally().dropped_tokens == 0);
    CHECK(b.tally().eos_placed == 0);
}

TEST_CASE("boundary at L means the next chunk starts without EOS") {
    const auto d1 = make_doc(1, 2, 10), d2 = make_doc(2, 3, 20), d3 = make_doc(3, 5, 30);
    ChunkBuilder b(6, kEos);
    auto supply = from_list({&d1, &d2, &d3});
    auto c1 = b.build(supply);
    REQUIRE(c1);
    CHECK(c1->tokens == std::vector<TokenId>{10, 11, kEos, 20, 21, 22});
    auto c2 = b.build(supply);
    REQUIRE(c2);
    CHECK(c2->tokens.front() == 30);
    CHECK(c2->tokens == std::vector<TokenId>{30, 31, 32, 33, 34, kEos});
    CHECK_NOTHROW(validate_chunk(*c2, 6, kEos));
}

TEST_CASE("two one-token documents with L=3") {
    std::set<std::vector<TokenId>> layouts;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::vector<SourcePool> pools;
        pools.push_back(SourcePool(0, {Document{1, 0, {5}}, Document{2, 0, {6}}}));
        PackingConfig cfg;
        cfg.length = 3;
        cfg.seed = seed;
        MixStream s({&pools[0]}, cfg);
        auto c = s.next();
        REQUIRE(c);
        CHECK(c->tokens[1] == kEos);
        layouts.insert(c->tokens);
        CHECK_FALSE(s.next());

        std::vector<SourcePool> again;
        again.push_back(SourcePool(0, {Document{1, 0, {5}}, Document{2, 0, {6}}}));
        MixStream s2({&again[0]}, cfg);
        CHECK(s2.next()->tokens == c->tokens);
    }
    CHECK(layouts.size() == 2);  // both orders occur across seeds
}

TEST_CASE("drop policy discards split suffixes") {
    const auto d1 = make_doc(1, 4, 10), d2 = make_doc(2, 6, 20), d3 = make_doc(3, 3, 30);
    ChunkBuilder b(6, kEos, Separator::Eos, RemainderPolicy::Drop);
    auto supply = from_list({&d1, &d2, &d3});
    auto c1 = b.build(supply);
    REQUIRE(c1);
    CHECK(c1->tokens == std::vector<TokenId>{10, 11, 12, 13, kEos, 20});
    CHECK(b.carry_document() == nullptr);
    CHECK(b.tally().dropped_tokens == 5);
    CHECK_FALSE(b.build(supply));  // d3 + EOS = 4 < 6
    CHECK(b.tally().dropped_tokens == 9);
    CHECK(b.tally().conserved());
}

TEST_CASE("strip separator abuts documents") {
    const auto d1 = make_doc(1, 2, 10), d2 = make_doc(2, 3, 20), d3 = make_doc(3, 4, 30);
    ChunkBuilder b(6, kEos, Separator::None);
    auto supply = from_list({&d1, &d2, &d3});
    auto c = b.build(supply);
    REQUIRE(c);
    CHECK(c->tokens == std::vector<TokenId>{10, 11, 20, 21, 22, 30});
    CHECK(c->segments.size() == 3);
    CHECK_NOTHROW(validate_chunk(*c, 6, kEos, Separator::None));
    CHECK(b.tally().eos_placed == 0);
}

TEST_CASE("builder agrees with the token-level reference packer") {
    Rng rng(2024);
    for (int trial = 0; trial < 300; ++trial) {
        const auto docs = cftest::random_docs(rng, 0, cftest::between(rng, 1, 12), 1, 20, 1, 9);
        std::vector<const Document*> order;
        for (const auto& d : docs) order.push_back(&d);
        const std::size_t L = cftest::between(rng, 2, 16);
        for (auto sep : {Separator::Eos, Separator::None}) {
            for (auto rem : {RemainderPolicy::Keep, RemainderPolicy::Drop}) {
                ChunkBuilder b(L, kEos, sep, rem);
                auto supply = from_list(order);
                std::vector<Chunk> got;
                while (auto c = b.build(supply)) got.push_back(std::move(*c));
                const auto want = cftest::brute_pack(order, L, kEos, sep, rem);
                REQUIRE(got.size() == want.chunks.size());
                for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == want.chunks[i]);
                CHECK(b.tally().dropped_tokens == want.dropped);
                CHECK(b.tally().eos_placed == want.eos_placed);
                CHECK(b.tally().docs_consumed == want.docs_consumed);
                CHECK(b.tally().conserved());
            }
        }
    }
}

TEST_CASE("mix chunks may span sources") {
    Rng gen(5);
    std::vector<SourcePool> pools;
    pools.emplace_back(0, cftest::random_docs(gen, 0, 40, 2, 10, 2, 50));
    pools.emplace_back(1, cftest::random_docs(gen, 1, 40, 2, 10, 2, 50));
    PackingConfig cfg;
    cfg.length = 32;
    MixStream s({&pools[0], &pools[1]}, cfg);
    bool mixed = false;
    while (auto c = s.next()) mixed = mixed || !c->single_source();
    CHECK(mixed);
    CHECK(s.tally().conserved());
}

TEST_CASE("uni chunks are single-source") {
    Rng gen(6);
    std::vector<SourcePool> pools;
    pools.emplace_back(0, cftest::random_docs(gen, 0, 60, 1, 30, 2, 50));
    pools.emplace_back(1, cftest::random_docs(gen, 1, 60, 1, 30, 2, 50));
    PackingConfig cfg;
    cfg.length = 24;
    cfg.strategy = Strategy::Uni;
    std::uint64_t chunks = 0;
    const auto summary = pack_corpus(pools, cfg, nullptr, [&](const Chunk& c) {
        ++chunks;
        CHECK(c.single_source());
    });
    CHECK(summary.mixed_source_chunks == 0);
    CHECK(summary.chunks == chunks);
    CHECK(summary.tally.conserved());
}

TEST_CASE("source with one short document yields no chunk") {
    std::vector<SourcePool> pools;
    pools.push_back(SourcePool(0, {Document{1, 0, {4, 4, 4}}}));
    pools.push_back(SourcePool(1, {Document{2, 1, std::vector<TokenId>(40, 9)}}));
    PackingConfig cfg;
    cfg.length = 8;
    cfg.strategy = Strategy::Uni;
    const auto summary = pack_corpus(pools, cfg, nullptr, [](const Chunk&) {});
    CHECK(summary.chunks_by_source.count(0) == 0);
    CHECK(summary.chunks_by_source.at(1) == 5);
    CHECK(summary.tally.dropped_tokens == 4);  // 3 tokens + EOS; source 1 ends exactly at a boundary
}

TEST_CASE("composer with one source draws only from it") {
    BatchComposer comp(endless({0}), {{0, 1.0}}, 4, 1);
    for (int i = 0; i < 10; ++i) {
        auto b = comp.next_batch();
        REQUIRE(b);
        CHECK(b->chunks.size() == 4);
        for (auto s : b->sources) CHECK(s == 0);
    }
}

TEST_CASE("composer slot shares stay within 3 sigma") {
    SUBCASE("two equal weights") {
        BatchComposer comp(endless({0, 1}), {{0, 0.5}, {1, 0.5}}, 10, 77);
        int a = 0;
        for (int i = 0; i < 1000; ++i) {
            const auto batch = comp.next_batch();
            for (auto s : batch->sources) a += s == 0;
        }
        CHECK(std::abs(a - 5000) < 3 * std::sqrt(10000 * 0.25));
    }
    SUBCASE("seven-source mixture") {
        const std::vector<double> share{0.522, 0.267, 0.052, 0.042, 0.046, 0.038, 0.033};
        std::map<SourceId, std::unique_ptr<ChunkStream>> streams;
        std::map<SourceId, double> weights;
        for (SourceId s = 0; s < share.size(); ++s) {
            streams.emplace(s, std::make_unique<EndlessStream>(s));
            weights[s] = share[s];
        }
        BatchComposer comp(std::move(streams), weights, 8, 2024);
        constexpr int kBatches = 2500;
        std::map<SourceId, int> counts;
        for (int i = 0; i < kBatches; ++i) {
            const auto batch = comp.next_batch();
            for (auto s : batch->sources) counts[s]++;
        }
        const double n = kBatches * 8.0;
        for (SourceId s = 0; s < share.size(); ++s) {
            const double sigma = std::sqrt(n * share[s] * (1 - share[s]));
            CHECK(std::abs(counts[s] - n * share[s]) < 3 * sigma);
        }
    }
}

TEST_CASE("exhausted sources are renormalized away and the last batch is flagged") {
    std::map<SourceId, std::unique_ptr<ChunkStream>> streams;
    streams.emplace(0, std::make_unique<EndlessStream>(0, 5));
    streams.emplace(1, std::make_unique<EndlessStream>(1, 12));
    BatchComposer comp(std::move(streams), {{0, 0.9}, {1, 0.1}}, 4, 3);
    std::vector<Batch> batches;
    while (auto b = comp.next_batch()) batches.push_back(std::move(*b));
    std::size_t total = 0;
    for (std::size_t i = 0; i < batches.size(); ++i) {
        total += batches[i].chunks.size();
        CHECK(batches[i].short_final == (i + 1 == batches.size()));
    }
    CHECK(total == 17);
    CHECK(batches.back().chunks.size() == 1);
}

TEST_CASE("composer rejects bad arguments") {
    CHECK_THROWS_AS(BatchComposer(endless({0}), {{0, 1.0}}, 0, 1), UsageError);
    CHECK_THROWS_AS(BatchComposer(endless({0}), {{1, 1.0}}, 2, 1), UsageError);
}

TEST_CASE("config validation") {
    PackingConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.length = 1;
    CHECK_THROWS_AS(cfg.validate(), UsageError);
    cfg.length = 16;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), UsageError);
    cfg.batch_size = 1;
    cfg.bm25.buffer_size = 1;
    CHECK_THROWS_AS(cfg.validate(), UsageError);
    cfg.bm25.buffer_size = 2;
    cfg.bm25.query_len = 0;
    CHECK_THROWS_AS(cfg.validate(), UsageError);
    cfg.bm25.query_len = 1;
    cfg.bm25.k1 = 0;
    CHECK_THROWS_AS(cfg.validate(), UsageError);
    cfg.bm25.k1 = 1;
    cfg.bm25.b = 1.5;
    CHECK_THROWS_AS(cfg.validate(), UsageError);
    CHECK_THROWS_AS(parse_strategy("random"), UsageError);
    CHECK(parse_strategy("bm25") == Strategy::Bm25);
    CHECK(parse_bm25_mode("one_hop") == Bm25Mode::OneHop);
    CHECK(parse_remainder("drop") == RemainderPolicy::Drop);
    CHECK(parse_separator("strip") == Separator::None);
}

TEST_CASE("parallel source streams give the same output as sequential ones") {
    for (auto strategy : {Strategy::Uni, Strategy::Bm25}) {
        std::vector<std::vector<Chunk>> runs;
        for (unsigned threads : {1U, 3U}) {
            Rng gen(11);
            std::vector<SourcePool> pools;
            for (SourceId s = 0; s < 3; ++s) pools.emplace_back(s, cftest::random_docs(gen, s, 80, 1, 40, 2, 60));
            PackingConfig cfg;
            cfg.length = 32;
            cfg.strategy = strategy;
            cfg.seed = 4;
            cfg.bm25.buffer_size = 16;
            cfg.bm25.query_len = 8;
            std::vector<Chunk> out;
            pack_corpus(pools, cfg, std::make_shared<const StopwordSet>(), [&](const Chunk& c) { out.push_back(c); },
                        threads);
            runs.push_back(std::move(out));
        }
        CHECK(runs[0] == runs[1]);
    }
}
