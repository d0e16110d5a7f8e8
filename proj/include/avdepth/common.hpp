#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace avdepth {

/// Thrown when tensor/array shapes do not satisfy an operation's contract.
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Thrown on invalid argument values (negative lengths, empty kernels, ...).
struct ArgumentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Thrown on file-system failures; message carries the offending path.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Thrown on numeric failures (NaN gradients, diverging loss, empty masks).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Thrown on malformed on-disk artifacts (bad magic, missing/unknown keys).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace avdepth
