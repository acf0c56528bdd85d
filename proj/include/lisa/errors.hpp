// Copyright (C) 2026 The LISA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lisa {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or arguments. The CLI maps this to exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

enum class LoadErrorKind {
  io,
  malformed_header,
  truncated,
  checksum,
  dimension_mismatch,
  non_finite,
};

inline const char* to_string(LoadErrorKind kind) {
  switch (kind) {
    case LoadErrorKind::io: return "io";
    case LoadErrorKind::malformed_header: return "malformed_header";
    case LoadErrorKind::truncated: return "truncated";
    case LoadErrorKind::checksum: return "checksum";
    case LoadErrorKind::dimension_mismatch: return "dimension_mismatch";
    case LoadErrorKind::non_finite: return "non_finite";
  }
  return "unknown";
}

class LoadError : public Error {
 public:
  LoadError(LoadErrorKind kind, const std::string& what)
      : Error(std::string("load error [") + to_string(kind) + "]: " + what), kind_(kind) {}

  LoadErrorKind kind() const noexcept { return kind_; }

 private:
  LoadErrorKind kind_;
};

/// Sequence would exceed the model's max_seq_len.
class OverflowError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf appeared in an activation. `layer` is 1-based; 0 means the embedding.
class NumericalError : public Error {
 public:
  NumericalError(std::size_t layer, const std::string& what)
      : Error("non-finite activation at layer " + std::to_string(layer) + ": " + what),
        layer_(layer) {}

  std::size_t layer() const noexcept { return layer_; }

 private:
  std::size_t layer_;
};

/// A constructed model failed to reach its calibration target.
class CalibrationError : public Error {
 public:
  using Error::Error;
};

}  // namespace lisa
