#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mailconv {

/// Bad or unreadable input (records, profiles, config files). Maps to exit code 1.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A record line that could not be parsed. Carries the 1-based line number.
class RecordError : public InputError {
 public:
  RecordError(std::size_t line, const std::string& what)
      : InputError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Precondition violation inside an analysis or learning routine.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace mailconv
