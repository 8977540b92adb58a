#pragma once

#include <stdexcept>
#include <string>

namespace srm {

// Error taxonomy mirrored by the CLI exit codes:
// ValidationError -> 1, NumericError -> 2, IoError -> 3.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace srm
