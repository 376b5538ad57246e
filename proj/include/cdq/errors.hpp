#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cdq {

/// Caller passed something outside an operation's domain (unknown state,
/// foreign event, alphabet mismatch, ...).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Runtime data contradicts a modelling assumption, e.g. a label set whose
/// permutations drive a reward machine to different states.
class ConsistencyViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An internal invariant failed. Always a bug or a pathological input.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A decomposition criterion does not hold; carries the shortest event
/// sequence on which the two sides disagree.
class CriterionRejected : public std::runtime_error {
 public:
  CriterionRejected(const std::string& what, std::vector<std::string> counterexample)
      : std::runtime_error(what), counterexample_(std::move(counterexample)) {}
  const std::vector<std::string>& counterexample() const noexcept { return counterexample_; }

 private:
  std::vector<std::string> counterexample_;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column = 0)
      : std::runtime_error(format(what, line, column)), line_(line), column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  static std::string format(const std::string& what, std::size_t line, std::size_t column) {
    std::string out = "line " + std::to_string(line);
    if (column != 0) out += ", column " + std::to_string(column);
    return out + ": " + what;
  }

  std::size_t line_;
  std::size_t column_;
};

}  // namespace cdq
