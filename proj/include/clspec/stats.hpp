#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "clspec/errors.hpp"
#include "clspec/rng.hpp"

namespace clspec {

/// Nearest-rank quantile of an ascending-sorted range: the ceil(p*n)-th order
/// statistic.  Deterministic, no interpolation.
inline double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile_sorted: empty range");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile_sorted: p outside [0,1]");
  const auto n = sorted.size();
  std::size_t rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
  if (rank == 0) rank = 1;
  if (rank > n) rank = n;
  return sorted[rank - 1];
}

inline double quantile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, p);
}

inline double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

/// Two-sample Kolmogorov-Smirnov distance sup_x |F_a(x) - F_b(x)|.
inline double ks_distance(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_distance: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t ia = 0, ib = 0;
  double d = 0.0;
  while (ia < a.size() && ib < b.size()) {
    const double x = std::min(a[ia], b[ib]);
    while (ia < a.size() && a[ia] <= x) ++ia;
    while (ib < b.size() && b[ib] <= x) ++ib;
    d = std::max(d, std::abs(static_cast<double>(ia) / na - static_cast<double>(ib) / nb));
  }
  return d;
}

/// Consecutive-gap ratios r_i = min(d_i, d_{i+1}) / max(d_i, d_{i+1}) for an
/// ascending-sorted list of values.  A zero/zero pair (exact degeneracy)
/// contributes ratio 1.
inline std::vector<double> gap_ratios(std::span<const double> sorted_values) {
  std::vector<double> out;
  if (sorted_values.size() < 3) return out;
  out.reserve(sorted_values.size() - 2);
  for (std::size_t i = 0; i + 2 < sorted_values.size(); ++i) {
    const double d0 = sorted_values[i + 1] - sorted_values[i];
    const double d1 = sorted_values[i + 2] - sorted_values[i + 1];
    const double hi = std::max(d0, d1);
    out.push_back(hi == 0.0 ? 1.0 : std::min(d0, d1) / hi);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Power-law tail fitting
// ---------------------------------------------------------------------------

struct TailFit {
  double beta_hat = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double cutoff = 0.0;
  std::size_t tail_count = 0;
  bool heavy_tail = false;  // diagnostic: max barely above the cutoff means
                            // there is no power-law tail worth reporting
};

namespace detail {

/// Hill-type MLE for the density exponent beta of a power-law tail, on the
/// values strictly above the cutoff quantile.  The +0.5 shift of the
/// threshold is the usual continuity correction for integer-valued data.
inline TailFit hill_fit_once(const std::vector<double>& sorted, double cutoff_quantile) {
  TailFit fit;
  fit.cutoff = quantile_sorted(sorted, cutoff_quantile);
  const auto first = std::upper_bound(sorted.begin(), sorted.end(), fit.cutoff);
  fit.tail_count = static_cast<std::size_t>(sorted.end() - first);
  if (fit.tail_count == 0) throw DegenerateDegrees("all values at or below the cutoff");
  if (fit.tail_count < 10) throw DegenerateDegrees("tail too small to fit");
  const double x0 = fit.cutoff + 0.5;
  double logsum = 0.0;
  for (auto it = first; it != sorted.end(); ++it) logsum += std::log(*it / x0);
  if (!(logsum > 0.0)) throw DegenerateDegrees("tail has no spread above the cutoff");
  fit.beta_hat = 1.0 + static_cast<double>(fit.tail_count) / logsum;
  fit.heavy_tail = sorted.back() > 2.0 * fit.cutoff;
  return fit;
}

}  // namespace detail

/// Tail-exponent fit with a percentile-bootstrap confidence interval.
inline TailFit hill_tail_fit(std::vector<double> values, double cutoff_quantile = 0.8,
                             int bootstraps = 200, std::uint64_t seed = 1) {
  if (values.size() < 20) throw DegenerateDegrees("too few values for a tail fit");
  std::sort(values.begin(), values.end());
  TailFit fit = detail::hill_fit_once(values, cutoff_quantile);

  std::vector<double> boot;
  boot.reserve(static_cast<std::size_t>(bootstraps));
  std::vector<double> resample(values.size());
  for (int b = 0; b < bootstraps; ++b) {
    CounterRng rng(hash_combine(seed, 0xb007), static_cast<std::uint64_t>(b), 0);
    for (std::size_t i = 0; i < values.size(); ++i) {
      resample[i] = values[rng.next_u64() % values.size()];
    }
    std::sort(resample.begin(), resample.end());
    try {
      boot.push_back(detail::hill_fit_once(resample, cutoff_quantile).beta_hat);
    } catch (const DegenerateDegrees&) {
      // skip degenerate resamples
    }
  }
  if (boot.size() >= 20) {
    std::sort(boot.begin(), boot.end());
    fit.ci_lo = quantile_sorted(boot, 0.025);
    fit.ci_hi = quantile_sorted(boot, 0.975);
  } else {
    fit.ci_lo = fit.beta_hat;
    fit.ci_hi = fit.beta_hat;
  }
  return fit;
}

}  // namespace clspec
