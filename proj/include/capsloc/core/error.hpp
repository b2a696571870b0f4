#pragma once

#include <stdexcept>
#include <string>

namespace capsloc {

// Shape/rank mismatches and out-of-range axes.
class DimensionError : public std::runtime_error {
 public:
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad hyperparameter combinations (non-positive feature maps, decoder that
// cannot reach the target image size, ...).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input files: IDX magic, truncation, container/meta mismatches.
class DataFormatError : public std::runtime_error {
 public:
  explicit DataFormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf values, non-finite losses, failed verification.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// All coupling mass vanished for a capsule, or an all-zero gradient map.
class DegenerateError : public std::runtime_error {
 public:
  explicit DegenerateError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace capsloc
