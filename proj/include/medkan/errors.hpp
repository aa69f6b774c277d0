#pragma once

#include <stdexcept>
#include <string>

namespace medkan {

/// Base class for all errors raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid configuration: bad shapes, geometry, JSON config contents.
/// Maps to process exit code 2 at the CLI boundary.
struct ConfigError : Error {
    using Error::Error;
};

/// Shape mismatch between tensors. A ConfigError whose message always
/// names both offending shapes.
struct ShapeError : ConfigError {
    using ConfigError::ConfigError;
};

/// Malformed or inconsistent input data (NPY/NPZ archives, datasets,
/// checkpoints, out-of-range sample indices). Exit code 3.
struct DataError : Error {
    using Error::Error;
};

/// Environment failures: unwritable paths, failed syscalls. Exit code 4.
struct RuntimeError : Error {
    using Error::Error;
};

} // namespace medkan
