#pragma once

#include <stdexcept>
#include <string>

namespace osteoforge {

/// Base error. `field()` names the offending input (a JSON key, a tensor
/// name, a CLI flag, a file path) so callers can report it structurally.
class Error : public std::runtime_error {
 public:
  Error(std::string field, const std::string& message)
      : std::runtime_error(field.empty() ? message : field + ": " + message),
        field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Malformed or inconsistent file on disk.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or argument combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor or image shapes that do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace osteoforge
