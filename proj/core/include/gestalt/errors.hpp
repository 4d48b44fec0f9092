#pragma once

#include <stdexcept>
#include <string>

namespace gestalt {

// Error categories map 1:1 to CLI exit codes (config=2, numeric=3, io=4).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Degenerate statistical input (zero variance, too few observations).
struct StatError : std::runtime_error {
  explicit StatError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace gestalt
