#pragma once

#include <cmath>
#include <complex>

namespace clspec {

using cplx = std::complex<double>;

/// Neumaier compensated accumulator.  Keeps large averages accurate enough
/// that fixed-point residuals near 1e-12 stay meaningful.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }

  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

class CompensatedComplexSum {
 public:
  void add(cplx x) noexcept {
    re_.add(x.real());
    im_.add(x.imag());
  }

  cplx value() const noexcept { return {re_.value(), im_.value()}; }

 private:
  CompensatedSum re_;
  CompensatedSum im_;
};

}  // namespace clspec
