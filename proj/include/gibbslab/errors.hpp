#pragma once

#include <stdexcept>
#include <string>

namespace gibbslab {

// Error taxonomy shared by every module.  The CLI maps these to exit codes:
// ParameterError -> 3, InvariantError -> 2, ResourceError -> 4.

// Bad user-supplied input: out-of-domain argument, malformed config.
struct ParameterError : std::invalid_argument {
    explicit ParameterError(const std::string& msg) : std::invalid_argument(msg) {}
};

// A mathematical invariant the implementation relies on failed to hold.
struct InvariantError : std::runtime_error {
    explicit InvariantError(const std::string& msg) : std::runtime_error(msg) {}
};

// A configured resource cap (matrix dimension, enumeration size) was exceeded.
struct ResourceError : std::runtime_error {
    explicit ResourceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace gibbslab
