// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <stdexcept>
#include <string>

namespace microlink {

// Broken internal invariant: a sampler or caller bug, never bad input.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Hyperparameter elicitation asked for a degenerate or undefined setting.
class ElicitationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or unusable input data. Carries the 1-based line and column
// when the problem can be pinned to a cell (0 means "not applicable").
class DataError : public std::runtime_error {
 public:
  DataError(const std::string& what, std::size_t line = 0,
            std::size_t column = 0)
      : std::runtime_error(format(what, line, column)),
        line_(line),
        column_(column) {}

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  static std::string format(const std::string& what, std::size_t line,
                            std::size_t column) {
    std::string out = what;
    if (line > 0) {
      out += " (line " + std::to_string(line);
      if (column > 0) out += ", column " + std::to_string(column);
      out += ")";
    }
    return out;
  }

  std::size_t line_;
  std::size_t column_;
};

// Run configuration failed schema validation. `pointer` is a JSON pointer
// to the offending member.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& pointer, const std::string& what)
      : std::runtime_error(pointer + ": " + what), pointer_(pointer) {}

  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

// A randomized routine could not produce a draw (e.g. rejection budget).
class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MICROLINK_REQUIRE(cond, msg)                                        \
  do {                                                                      \
    if (!(cond))                                                            \
      throw ::microlink::ContractViolation(std::string(__func__) + ": " +   \
                                           (msg));                          \
  } while (0)

}  // namespace microlink
