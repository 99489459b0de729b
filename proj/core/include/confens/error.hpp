// Copyright 2026 The confens Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace confens {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input (corpus files, configs, feature layouts).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// An internal invariant did not hold.
class InvariantError : public Error {
 public:
  using Error::Error;
};

}  // namespace confens
