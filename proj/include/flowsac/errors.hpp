#pragma once

#include <stdexcept>
#include <string>

namespace flowsac {

// Thrown when a computation leaves the realm of valid numbers: non-finite
// values, failed factorizations, non-convergent iterations, unstable gains.
// Contract violations (wrong dimensions, bad configs) use std::invalid_argument.
struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

// Thrown for filesystem and serialization problems: unreadable or unwritable
// paths, malformed JSON, corrupt checkpoint payloads.
struct io_error : std::runtime_error {
  explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace flowsac
