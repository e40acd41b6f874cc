#pragma once

#include <stdexcept>
#include <string>

namespace tgia {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file; the message carries the file and line.
struct ParseError : Error {
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what), line(line) {}
  std::size_t line;
};

// Structurally valid input that violates a data-model invariant.
struct ValidationError : Error {
  using Error::Error;
};

// Numerical failure (non-finite loss or gradient, degenerate geometry).
struct NumericError : Error {
  using Error::Error;
};

}  // namespace tgia
