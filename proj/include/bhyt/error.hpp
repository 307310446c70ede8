// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bhyt {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or a zero-sized dimension.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A hyperparameter or argument outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Statistics that make a scale undefined (all-zero row with no eps guard).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf appeared. `site` names the first offending location and
/// `layer` is the 1-based layer index when one applies (0 otherwise).
class NumericError : public Error {
 public:
  NumericError(const std::string& site, std::size_t layer = 0)
      : Error("non-finite value at " + site +
              (layer ? " (layer " + std::to_string(layer) + ")" : "")),
        site_(site),
        layer_(layer) {}

  const std::string& site() const noexcept { return site_; }
  std::size_t layer() const noexcept { return layer_; }

 private:
  std::string site_;
  std::size_t layer_;
};

/// Backward was requested without a matching forward trace.
class StateError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Configuration file problems; the message carries the line or field path.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace bhyt
