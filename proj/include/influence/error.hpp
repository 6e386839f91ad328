#pragma once

#include <stdexcept>
#include <string>

namespace influence {

/// Bad input: malformed files, out-of-range arguments, dimension mismatches.
class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Requested derivative does not exist for the loss family (hinge).
class UnsupportedOperation : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

/// Solver breakdown: indefinite curvature, divergence, non-convergence.
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace influence
