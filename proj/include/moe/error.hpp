#pragma once

#include <stdexcept>
#include <string>

namespace moe {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid arguments, violated preconditions, infeasible pruning ratios.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent checkpoint manifests (dimension mismatches, bad references).
class ManifestError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// File-system failures: missing files, short reads, bad magic bytes.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Numerical failures: rank-deficient orthonormalization, non-finite values.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Misuse between components, e.g. gating applied to a mismatched layer.
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace moe
