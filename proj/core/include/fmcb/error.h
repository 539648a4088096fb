#ifndef FMCB_ERROR_H_
#define FMCB_ERROR_H_

#include <stdexcept>
#include <string>

namespace fmcb {

// Base class for all errors raised by the library. Callers that only need to
// report a failure can catch this; the subclasses exist for the few places
// where a caller reacts differently (the CLI maps them to exit codes, the
// boosting loop treats a zero gradient as convergence).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes of two operands disagree (rows, columns, feature counts, K).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Malformed input files or model files.
class ParseError : public Error {
 public:
  using Error::Error;
};

// The matrix handed to a rank-one factorizer has no dominant direction.
class ZeroMatrixError : public Error {
 public:
  using Error::Error;
};

// An iterative method ran out of iterations.
class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& what, double achieved_residual)
      : Error(what), achieved_residual_(achieved_residual) {}
  double achieved_residual() const { return achieved_residual_; }

 private:
  double achieved_residual_;
};

}  // namespace fmcb

#endif  // FMCB_ERROR_H_
