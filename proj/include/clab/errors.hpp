#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace clab {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad arguments: shape mismatches, indices out of range, parameters outside
// their admissible domain.  Callers can always avoid these.
struct DomainError : Error {
  using Error::Error;
};

// The computation itself went bad: integrator step underflow, NaN/Inf
// contamination, failed convergence of an iterative loop.
struct NumericError : Error {
  using Error::Error;
};

// A conditional (relative) state was requested for a branch whose weight is
// below the representable floor; the normalized state would be garbage.
struct DegenerateConditionalState : NumericError {
  using NumericError::NumericError;
};

// A collapse target carries (numerically) zero weight, so the 1/p term in the
// generator is undefined.
struct DegenerateTarget : NumericError {
  using NumericError::NumericError;
};

// A collapse window finished without actually reaching a collapsed state
// (residual off-target weight above the completion floor at the cutoff).
struct CollapseFailed : NumericError {
  using NumericError::NumericError;
};

// Regression fit could not be performed (too few usable points, degenerate
// abscissae, non-positive weights where a log is required).
struct FitError : Error {
  using Error::Error;
};

// Input validation (config files, scenario descriptions).  Collects every
// issue found so the user sees them all at once.
struct ValidationError : Error {
  std::vector<std::string> issues;

  explicit ValidationError(std::vector<std::string> found)
      : Error(join(found)), issues(std::move(found)) {}

 private:
  static std::string join(const std::vector<std::string>& found) {
    std::string msg = "validation failed";
    for (const auto& s : found) {
      msg += "\n  - ";
      msg += s;
    }
    return msg;
  }
};

}  // namespace clab
