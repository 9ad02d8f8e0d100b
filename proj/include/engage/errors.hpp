#pragma once

#include <stdexcept>
#include <string>

namespace engage {

/// Malformed or missing dataset input. `where` names the file and, when
/// known, the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(std::move(where)) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericalError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// The smoothed channel-weight vector was zero, so no heat-map exists for
/// this instance. Callers fall back to random augmentation.
class DegenerateExplanation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace engage
