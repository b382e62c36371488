// Copyright (C) 2026 the drax authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace drax {

using Token = std::int32_t;
using TokenSeq = std::vector<Token>;

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument outside its mathematical domain (e.g. t outside [0,1]).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Mismatched vector/state-space dimensions.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A probability vector that is negative, non-finite or does not sum to 1.
class InvalidDistributionError : public Error {
 public:
  using Error::Error;
};

/// A rate row with an off-diagonal entry below tolerance.
class InvalidRateError : public Error {
 public:
  using Error::Error;
};

/// Velocity coefficients requested at t=0 or t=1.
class SingularityError : public Error {
 public:
  using Error::Error;
};

/// Operation not defined for this schedule kind.
class UnsupportedScheduleError : public Error {
 public:
  using Error::Error;
};

/// Dense enumeration would exceed the configured state cap.
class EnumerationCapError : public Error {
 public:
  using Error::Error;
};

/// Euler transition probabilities left the simplex; retry with smaller h.
class StepSizeError : public Error {
 public:
  using Error::Error;
};

/// Training loss became non-finite.
class TrainingDivergedError : public Error {
 public:
  using Error::Error;
};

/// Master-equation integration drifted beyond tolerance; refine the grid.
class RefineGridError : public Error {
 public:
  using Error::Error;
};

/// A stated precondition of a check or operation does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A hard correctness invariant was violated (this is a bug, not bad input).
class InvariantViolationError : public Error {
 public:
  using Error::Error;
};

/// Bad CLI usage or malformed configuration.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace drax
