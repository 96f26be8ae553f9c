#pragma once

#include <stdexcept>
#include <string>

namespace metawarm {

// Malformed configuration, bad argument, or violated precondition.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// A required input file or upstream artifact is absent.
struct MissingArtifactError : std::runtime_error {
    explicit MissingArtifactError(const std::string& msg) : std::runtime_error(msg) {}
};

// A computation produced non-finite or otherwise unusable numbers.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace metawarm
