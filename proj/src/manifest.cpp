#include "chunkforge/manifest.hpp"

#include <fstream>

#include <fmt/core.h>
#include <json.hpp>

namespace chunkforge {

using nlohmann::json;

Tokenizer TokenizerSettings::make() const {
    if (kind == TokenizerKind::ExternalVocab) {
        if (!vocab_path) throw UsageError("external-vocab tokenizer needs a vocabulary file");
        return Tokenizer::from_vocab_file(*vocab_path, eos_id, unk_id);
    }
    if (vocab_path) throw UsageError("a vocabulary file only applies to the external-vocab tokenizer");
    return Tokenizer::whitespace_punct(eos_id.value_or(0), unk_id.value_or(1));
}

namespace {
std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

std::uint64_t parse_hex64(const std::string& s) {
    try {
        std::size_t used = 0;
        const auto v = std::stoull(s, &used, 16);
        if (used != s.size()) throw Error("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw Error(fmt::format("invalid fingerprint '{}'", s));
    }
}
}  // namespace

void write_manifest(const std::string& path, const Manifest& m) {
    json tok = {{"kind", std::string(to_string(m.tokenizer.kind))}, {"eos_id", m.eos_id}, {"unk_id", m.unk_id},
                {"fingerprint", hex64(m.tokenizer_fingerprint)}};
    tok["vocab"] = m.tokenizer.vocab_path ? json(*m.tokenizer.vocab_path) : json(nullptr);
    json sources = json::array();
    std::uint64_t total = 0;
    for (const auto& s : m.sources) {
        total += s.tokens;
        sources.push_back({{"source_id", s.source_id},
                           {"name", s.name},
                           {"files", s.files},
                           {"documents", s.documents},
                           {"tokens", s.tokens},
                           {"skipped", s.skipped},
                           {"weight", s.weight}});
    }
    json doc = {{"format", "chunkforge-manifest"}, {"version", 1}, {"tokenizer", tok}, {"sources", sources},
                {"total_tokens", total}};
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(path, "cannot open manifest for writing");
    out << doc.dump(2) << '\n';
    if (!out) throw IoError(path, "write failed");
}

Manifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path, "cannot open manifest");
    Manifest m;
    try {
        const json doc = json::parse(in);
        if (doc.value("format", "") != "chunkforge-manifest") throw Error("not a chunkforge manifest");
        const auto& tok = doc.at("tokenizer");
        m.tokenizer.kind = parse_tokenizer_kind(tok.at("kind").get<std::string>());
        if (!tok.at("vocab").is_null()) m.tokenizer.vocab_path = tok.at("vocab").get<std::string>();
        m.eos_id = tok.at("eos_id").get<TokenId>();
        m.unk_id = tok.at("unk_id").get<TokenId>();
        m.tokenizer.eos_id = m.eos_id;
        m.tokenizer.unk_id = m.unk_id;
        m.tokenizer_fingerprint = parse_hex64(tok.at("fingerprint").get<std::string>());
        for (const auto& s : doc.at("sources")) {
            ManifestSource src;
            src.source_id = s.at("source_id").get<SourceId>();
            src.name = s.at("name").get<std::string>();
            src.files = s.at("files").get<std::vector<std::string>>();
            src.documents = s.at("documents").get<std::uint64_t>();
            src.tokens = s.at("tokens").get<std::uint64_t>();
            src.skipped = s.value("skipped", std::uint64_t{0});
            src.weight = s.at("weight").get<double>();
            m.sources.push_back(std::move(src));
        }
    } catch (const json::exception& e) {
        throw Error(fmt::format("{}: invalid manifest: {}", path, e.what()));
    }
    return m;
}

LoadedCorpus load_corpus(const Manifest& manifest) {
    LoadedCorpus corpus{manifest.tokenizer.make(), {}};
    for (const auto& src : manifest.sources) {
        auto pool = ingest_jsonl_files(src.files, src.source_id, corpus.tokenizer);
        if (pool.documents().size() != src.documents || pool.total_tokens() != src.tokens) {
            throw Error(fmt::format("source '{}' changed since ingest: {} docs / {} tokens, manifest says {} / {}",
                                    src.name, pool.documents().size(), pool.total_tokens(), src.documents,
                                    src.tokens));
        }
        corpus.pools.push_back(std::move(pool));
    }
    check_unique_doc_ids(corpus.pools);
    if (corpus.tokenizer.fingerprint() != manifest.tokenizer_fingerprint) {
        throw Error("tokenizer fingerprint differs from the manifest; re-run ingest");
    }
    return corpus;
}

}  // namespace chunkforge
