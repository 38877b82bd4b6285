#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace agfuse {

/// Coarse classification used by the CLI to pick an exit code.
enum class ErrorKind {
    Validation,   // bad arguments, invariant violations, schema mismatches
    Format,       // malformed file contents
    Corruption,   // well-formed header but inconsistent payload
    Io,           // filesystem failures
    Alignment,    // grids or band lists that must match do not
    Coverage,     // not enough valid data to compute a result
    Geometry,     // impossible grid/shift geometry
    Solver,       // numerical routine failed to converge
    Shape,        // tensor shapes inconsistent with a model
    Config,       // inconsistent model/run configuration
    Data,         // unusable training data
    Domain,       // inputs outside the supported domain
    Partition,    // cross-validation partitioning impossible
    Schema        // band/feature layout differs from what a model expects
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Malformed file; carries the byte offset where parsing stopped.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : Error(ErrorKind::Format, what + " (at byte " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
    if (!cond) fail(kind, what);
}

}  // namespace agfuse
