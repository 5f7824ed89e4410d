#pragma once

#include <stdexcept>
#include <string>

namespace msdp {

// Invalid or inconsistent configuration (exit code 2 at the CLI).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad or insufficient input data (exit code 3 at the CLI).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace msdp
