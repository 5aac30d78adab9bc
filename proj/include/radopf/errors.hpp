#pragma once

#include <stdexcept>
#include <string>

namespace radopf {

/// Malformed case text. Carries the 1-based line number where parsing failed.
class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// Structurally invalid network or instance (disconnected, bad bounds, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A model was asked for something it does not support (meshed input to a
/// radial-only routine, taps on a line, ...).
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A relaxation of the problem has no feasible point, so the problem itself
/// has none.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace radopf
