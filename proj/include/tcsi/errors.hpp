#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tcsi {

/// Shapes, ranks or mode indices that do not fit together.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A matrix that must have full column rank does not.
class RankDeficiencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An inner linear solve failed on both the iterative and the dense path.
class SolveError : public std::runtime_error {
 public:
  SolveError(const std::string& what, double residual)
      : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Malformed input file. line() is 1-based, 0 when not tied to a line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line, const std::string& source = {})
      : std::runtime_error((source.empty() ? std::string() : source + ": ") +
                           (line ? "line " + std::to_string(line) + ": " : std::string()) + what),
        message_(what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }
  /// The description without the source and line prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  std::string message_;
  std::size_t line_;
};

}  // namespace tcsi
