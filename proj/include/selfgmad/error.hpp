#pragma once

#include <stdexcept>
#include <string>

namespace selfgmad {

/// Malformed or inconsistent configuration (bad key, config drift within a run).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data violates a format or precondition (parse error, unknown id, missing file).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A live study has not collected enough ratings to proceed.
class IncompleteStudy : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace selfgmad
