#pragma once

#include <stdexcept>
#include <string>

namespace vmc {

/// Invalid configuration, argument range, or unknown vocabulary entry.
/// CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Tensor/video dimension mismatch between operands.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Missing, corrupt or hash-mismatched checkpoint. CLI exit code 3.
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A metric precondition failed (e.g. factor classifier below its accuracy
/// gate). CLI exit code 4.
struct PrerequisiteError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require_config(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

inline void require_shape(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

}  // namespace vmc
