// Copyright 2026 The ECCT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace ecct {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimension or length mismatch between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed or non-finite input values.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Operation invoked in the wrong object state (e.g. backward before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment or component configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Device partitioning could not satisfy its constraints.
class PartitionError : public Error {
 public:
  using Error::Error;
};

/// CSV schema does not match the file.
class SchemaError : public Error {
 public:
  using Error::Error;
};

}  // namespace ecct
