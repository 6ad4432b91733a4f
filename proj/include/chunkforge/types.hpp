#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace chunkforge {

using TokenId = std::uint32_t;
using DocId = std::uint64_t;
using SourceId = std::uint16_t;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad arguments or configuration; the CLI maps it to exit code 2.
class UsageError : public Error {
public:
    using Error::Error;
};

/// Raised when a file cannot be opened or read.
class IoError : public Error {
public:
    IoError(const std::string& path, const std::string& what)
        : Error(path + ": " + what), path_(path) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

/// A structural invariant (chunk tiling, segment metadata, ...) does not hold.
class InvariantError : public Error {
public:
    using Error::Error;
};

}  // namespace chunkforge
