#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "chunkforge/corpus.hpp"
#include "chunkforge/tokenizer.hpp"

namespace chunkforge {

struct TokenizerSettings {
    TokenizerKind kind = TokenizerKind::WhitespacePunct;
    std::optional<std::string> vocab_path;
    std::optional<TokenId> eos_id;
    std::optional<TokenId> unk_id;

    Tokenizer make() const;
};

struct ManifestSource {
    SourceId source_id = 0;
    std::string name;
    std::vector<std::string> files;
    std::uint64_t documents = 0;
    std::uint64_t tokens = 0;
    std::uint64_t skipped = 0;
    double weight = 0.0;
};

/// Ingest result persisted as JSON. Packing re-tokenizes the listed files and
/// checks the result against the recorded counts and tokenizer fingerprint.
struct Manifest {
    TokenizerSettings tokenizer;
    TokenId eos_id = 0;
    TokenId unk_id = 1;
    std::uint64_t tokenizer_fingerprint = 0;
    std::vector<ManifestSource> sources;
};

Manifest read_manifest(const std::string& path);
void write_manifest(const std::string& path, const Manifest& manifest);

struct LoadedCorpus {
    Tokenizer tokenizer;
    std::vector<SourcePool> pools;
};

/// Ingests the sources in manifest order with a fresh tokenizer.
/// Throws if counts or the fingerprint differ from the manifest.
LoadedCorpus load_corpus(const Manifest& manifest);

}  // namespace chunkforge
