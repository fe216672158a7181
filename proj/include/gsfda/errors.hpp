#pragma once

#include <stdexcept>
#include <string>

namespace gsfda {

// Error taxonomy shared by the library and the CLI. The CLI maps these onto
// exit codes: config/usage/shape -> 2, numeric -> 3, io -> 4.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dimension mismatch between operands.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid configuration value or malformed config/data file.
struct ConfigError : Error {
  using Error::Error;
};

// API misuse: stale cache, index out of range, missing prerequisite.
struct UsageError : Error {
  using Error::Error;
};

// Non-finite values where finite ones are required (divergence, bad input).
struct NumericError : Error {
  using Error::Error;
};

// File system failures.
struct IoError : Error {
  using Error::Error;
};

// Malformed input file; carries a 1-based line number when known.
struct ParseError : ConfigError {
  ParseError(const std::string& what, long line)
      : ConfigError(what + " (line " + std::to_string(line) + ")"), line(line) {}
  long line;
};

}  // namespace gsfda
