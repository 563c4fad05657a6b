#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace simcal {

// Invalid physical configuration or parameter value (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape mismatch between matrices/vectors; the message names the offending stage
// (CLI exit code 3).
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Geometry too compact for the propagation kernels (CLI exit code 3).
class SingularityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Scenario document violates the schema; carries the offending field path
// (CLI exit code 2).
class SchemaError : public std::runtime_error {
 public:
  SchemaError(std::string field_path, const std::string& message)
      : std::runtime_error(field_path + ": " + message),
        field_path_(std::move(field_path)) {}

  const std::string& field_path() const { return field_path_; }

 private:
  std::string field_path_;
};

}  // namespace simcal
