// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace spreadometer {

/// Base of every error raised by the library. `kind()` is the stable name
/// printed by the command-line tool.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "Error"; }
};

#define SPREADOMETER_DEFINE_ERROR(Name, Base)                        \
  class Name : public Base {                                         \
   public:                                                           \
    using Base::Base;                                                \
    const char* kind() const noexcept override { return #Name; }    \
  }

SPREADOMETER_DEFINE_ERROR(SchemaError, Error);
SPREADOMETER_DEFINE_ERROR(ParseError, Error);
SPREADOMETER_DEFINE_ERROR(DomainError, Error);
SPREADOMETER_DEFINE_ERROR(InfeasibilityError, Error);
SPREADOMETER_DEFINE_ERROR(LookupError, Error);
SPREADOMETER_DEFINE_ERROR(NumericError, Error);
SPREADOMETER_DEFINE_ERROR(SaturationError, Error);
SPREADOMETER_DEFINE_ERROR(ConfigError, Error);
SPREADOMETER_DEFINE_ERROR(IoError, Error);

// Degenerate denominators of the autocorrelation indices. Each one is a
// separate type so callers can count them apart.
SPREADOMETER_DEFINE_ERROR(DegenerateError, Error);
SPREADOMETER_DEFINE_ERROR(DegenerateVarianceError, DegenerateError);
SPREADOMETER_DEFINE_ERROR(DegenerateWeightsError, DegenerateError);
SPREADOMETER_DEFINE_ERROR(DegenerateLocalMeansError, DegenerateError);
SPREADOMETER_DEFINE_ERROR(DegenerateIndicatorError, DegenerateError);

#undef SPREADOMETER_DEFINE_ERROR

}  // namespace spreadometer
