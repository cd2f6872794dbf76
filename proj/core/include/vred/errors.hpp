#pragma once

#include <stdexcept>
#include <string>

namespace vred {

// User-facing errors (bad inputs, bad files) map to CLI exit code 1.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
    using Error::Error;
};

struct DomainError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

// Malformed bitstreams, checkpoints or WAV files.
struct FormatError : Error {
    using Error::Error;
};

struct CorpusError : Error {
    using Error::Error;
};

// Broken internal invariants map to CLI exit code 2.
struct InternalError : std::logic_error {
    using std::logic_error::logic_error;
};

}  // namespace vred
