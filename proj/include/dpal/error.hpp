#pragma once

#include <stdexcept>
#include <string>

namespace dpal {

// Base class for all toolkit errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape disagreement between matrices/vectors.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// Out-of-range or inconsistent scalar parameter (epsilon <= 0, k > n, ...).
class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& msg) : Error(msg) {}
};

// Malformed on-disk data (bad magic, truncation, inconsistent counts).
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& msg) : Error(msg) {}
};

// Label outside [0, num_classes) or missing where required.
class LabelError : public Error {
 public:
  explicit LabelError(const std::string& msg) : Error(msg) {}
};

// Labeling budget or privacy budget cannot be satisfied.
class BudgetError : public Error {
 public:
  explicit BudgetError(const std::string& msg) : Error(msg) {}
};

// Caller violated an API contract (e.g. fine-tuning on private examples).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& msg) : Error(msg) {}
};

// Bad or inconsistent configuration file.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

}  // namespace dpal
