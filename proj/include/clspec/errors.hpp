#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace clspec {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- profile / ensemble validation ---

class ViolatedGammaBound : public Error {
 public:
  using Error::Error;
};

class ViolatedFlatness : public Error {
 public:
  ViolatedFlatness(const std::string& msg, double value, double bound)
      : Error(msg), value(value), bound(bound) {}
  double value;
  double bound;
};

class ViolatedSparsity : public Error {
 public:
  ViolatedSparsity(const std::string& msg, int i, int j, double qs)
      : Error(msg), i(i), j(j), qs(qs) {}
  int i;
  int j;
  double qs;  // offending q * s_ij
};

class MuOutOfRange : public Error {
 public:
  using Error::Error;
};

// --- solvers ---

class NoConvergence : public Error {
 public:
  NoConvergence(const std::string& msg, double residual, int iterations,
                std::vector<std::complex<double>> best)
      : Error(msg), residual(residual), iterations(iterations), best(std::move(best)) {}
  double residual;
  int iterations;
  std::vector<std::complex<double>> best;  // last iterate
  int grid_index = -1;                     // set when raised from a grid solve
};

class LeftUpperHalfPlane : public Error {
 public:
  using Error::Error;
  int grid_index = -1;
};

class DomainViolation : public Error {
 public:
  using Error::Error;
};

// --- spectral statistics ---

class DecompositionFailure : public Error {
 public:
  using Error::Error;
};

class VectorsNotRetained : public Error {
 public:
  using Error::Error;
};

class EmptyBulk : public Error {
 public:
  using Error::Error;
};

class TooFewEigenvalues : public Error {
 public:
  using Error::Error;
};

// --- experiments ---

class BulkValidationFailed : public Error {
 public:
  using Error::Error;
};

class DegenerateDegrees : public Error {
 public:
  using Error::Error;
};

// --- configuration / IO ---

class SchemaViolation : public Error {
 public:
  SchemaViolation(const std::string& msg, std::vector<std::string> violations)
      : Error(msg), violations(std::move(violations)) {}
  std::vector<std::string> violations;  // "path: message" per violation
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace clspec
