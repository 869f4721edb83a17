#pragma once

#include <stdexcept>
#include <string>

namespace nvcav {

struct InvalidParameter : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Raised by cavity helpers when the requested geometry has no stable mode.
struct UnstableCavity : std::domain_error {
  using std::domain_error::domain_error;
};

/// A fit that could not produce a usable estimate.
struct FitFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad or missing configuration; `key` names the offending entry when known.
struct ConfigError : std::runtime_error {
  ConfigError(const std::string& key, const std::string& what)
      : std::runtime_error(key.empty() ? what : key + ": " + what), key(key) {}
  std::string key;
};

struct SequenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace nvcav
