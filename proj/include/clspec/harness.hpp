#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "clspec/ensemble.hpp"
#include "clspec/errors.hpp"
#include "clspec/sce.hpp"
#include "clspec/spectral.hpp"
#include "clspec/stats.hpp"

namespace clspec {

namespace detail {

/// Run tasks 0..count-1 on up to `threads` workers.  Task results go into
/// caller-owned slots, so the outcome is independent of scheduling.
inline void parallel_for(int count, int threads, const std::function<void(int)>& task) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    while (!failed.load(std::memory_order_relaxed)) {
      const int i = next.fetch_add(1);
      if (i >= count) return;
      try {
        task(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed.store(true);
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Experiment plan
// ---------------------------------------------------------------------------

struct DomainGrid {
  std::vector<double> e_values;
  std::vector<double> eta_values;  // probed spectral scales
};

struct ExperimentPlan {
  EnsembleSpec spec;
  Model model = Model::RandomSign;
  DomainGrid domain;
  int samples = 1;
  std::uint64_t base_seed = 1;
  long pair_budget = 100000;
  double delta = 0.1;            // eta floor is N^(delta-1)
  double bulk_threshold = 0.05;  // Im m lower bound defining the bulk
  double bulk_probe_eta = 1e-3;
  int bulk_scan_points = 65;
  int threads = 1;
};

/// Check the plan invariants: every eta at least N^(delta-1), and the E range
/// inside a detected bulk interval.  Returns the containing interval.
inline std::pair<double, double> validate_plan(const ExperimentPlan& plan,
                                               const SolveOptions& opts = {}) {
  if (plan.domain.e_values.empty() || plan.domain.eta_values.empty()) {
    throw std::invalid_argument("validate_plan: empty domain grid");
  }
  const double eta_floor = std::pow(static_cast<double>(plan.spec.n), plan.delta - 1.0);
  for (double eta : plan.domain.eta_values) {
    if (eta < eta_floor) {
      throw std::invalid_argument("validate_plan: eta " + std::to_string(eta) +
                                  " below the N^(delta-1) floor " + std::to_string(eta_floor));
    }
  }
  const double e_lo = *std::min_element(plan.domain.e_values.begin(), plan.domain.e_values.end());
  const double e_hi = *std::max_element(plan.domain.e_values.begin(), plan.domain.e_values.end());
  const double margin = 0.25 + 0.1 * (e_hi - e_lo);
  const auto intervals = scan_bulk(plan.spec, e_lo - margin, e_hi + margin, plan.bulk_scan_points,
                                   plan.bulk_probe_eta, plan.bulk_threshold, opts);
  const double slack = (2.0 * margin + e_hi - e_lo) / std::max(1, plan.bulk_scan_points - 1);
  for (const auto& [lo, hi] : intervals) {
    if (lo - slack <= e_lo && e_hi <= hi + slack) return {lo, hi};
  }
  throw BulkValidationFailed("plan E range [" + std::to_string(e_lo) + ", " + std::to_string(e_hi) +
                             "] is not inside a detected bulk interval");
}

// ---------------------------------------------------------------------------
// Local-law experiment
// ---------------------------------------------------------------------------

struct LocalLawSample {
  LocalLawRecord record;
  double m_dev;  // |m_N(z) - m(z)|
};

struct ZAggregate {
  cplx z;
  double phi;
  double lambda_phi_q50;
  double lambda_phi_q95;
  double lambda_phi_max;
  double mdev_phi_q95;
};

struct LocalLawReport {
  std::vector<LocalLawSample> records;  // ordered by (z index, sample index)
  std::vector<ZAggregate> per_z;        // grid order: E-major, eta as listed
  std::pair<double, double> bulk{0.0, 0.0};
  int samples = 0;
  int failures = 0;
  bool valid = true;  // false when >1% of samples failed
  double max_spectral_radius = 0.0;  // over the pre-solved SCE grid
  double seconds = 0.0;
};

/// Monte Carlo local-law sweep: for every sample seed and every grid z,
/// decompose one sampled matrix and record the resolvent deviations against
/// the pre-solved SCE.  Deterministic given the plan and base seed.
inline LocalLawReport run_local_law(const ExperimentPlan& plan, const SolveOptions& opts = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  LocalLawReport report;
  report.bulk = validate_plan(plan, opts);
  report.samples = plan.samples;

  // Pre-solve the SCE once per grid point, continuing in eta from 1 downward.
  std::vector<double> etas = plan.domain.eta_values;
  std::sort(etas.rbegin(), etas.rend());
  std::vector<cplx> zs;
  std::vector<SceSolution> sols;
  for (double e : plan.domain.e_values) {
    std::vector<cplx> column;
    for (double eta = 1.0; eta > etas.front(); eta /= 3.0) column.emplace_back(e, eta);
    for (double eta : etas) column.emplace_back(e, eta);
    auto solved = solve_grid(plan.spec, column, opts);
    for (std::size_t i = column.size() - etas.size(); i < column.size(); ++i) {
      report.max_spectral_radius = std::max(
          report.max_spectral_radius,
          stability_certificate(plan.spec, solved[i]).spectral_radius);
      zs.push_back(column[i]);
      sols.push_back(std::move(solved[i]));
    }
  }

  const int nz = static_cast<int>(zs.size());
  std::vector<std::optional<LocalLawSample>> slots(
      static_cast<std::size_t>(nz) * static_cast<std::size_t>(plan.samples));
  std::vector<char> sample_failed(static_cast<std::size_t>(plan.samples), 0);

  detail::parallel_for(plan.samples, plan.threads, [&](int s) {
    const std::uint64_t seed = hash_combine(plan.base_seed, static_cast<std::uint64_t>(s));
    Spectrum sp;
    try {
      sp = eigen_decompose(sample_matrix(plan.spec, plan.model, seed), true);
    } catch (const DecompositionFailure&) {
      sample_failed[static_cast<std::size_t>(s)] = 1;
      return;
    }
    for (int zi = 0; zi < nz; ++zi) {
      LocalLawSample rec;
      rec.record = local_law_record(sp, plan.spec, sols[static_cast<std::size_t>(zi)], zs[zi],
                                    plan.pair_budget);
      rec.m_dev = std::abs(empirical_stieltjes(sp, zs[zi]) - sols[static_cast<std::size_t>(zi)].m);
      slots[static_cast<std::size_t>(zi) * plan.samples + static_cast<std::size_t>(s)] =
          std::move(rec);
    }
  });

  for (char f : sample_failed) report.failures += f;
  report.valid = report.failures <= plan.samples / 100;

  report.records.reserve(slots.size());
  for (int zi = 0; zi < nz; ++zi) {
    std::vector<double> lphi, mphi;
    for (int s = 0; s < plan.samples; ++s) {
      auto& slot = slots[static_cast<std::size_t>(zi) * plan.samples + static_cast<std::size_t>(s)];
      if (!slot) continue;
      lphi.push_back(slot->record.lambda / slot->record.phi);
      mphi.push_back(slot->m_dev / slot->record.phi);
      report.records.push_back(std::move(*slot));
    }
    if (lphi.empty()) continue;
    std::sort(lphi.begin(), lphi.end());
    std::sort(mphi.begin(), mphi.end());
    ZAggregate agg;
    agg.z = zs[zi];
    agg.phi = phi_parameter(plan.spec.q, plan.spec.n, zs[zi].imag());
    agg.lambda_phi_q50 = quantile_sorted(lphi, 0.5);
    agg.lambda_phi_q95 = quantile_sorted(lphi, 0.95);
    agg.lambda_phi_max = lphi.back();
    agg.mdev_phi_q95 = quantile_sorted(mphi, 0.95);
    report.per_z.push_back(agg);
  }

  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

/// Median Lambda/Phi per eta must not increase as eta grows, checked at each
/// fixed E of the report's grid.
inline bool lambda_phi_medians_monotone(const LocalLawReport& report) {
  std::map<double, std::vector<std::pair<double, double>>> by_e;  // E -> (eta, median)
  for (const auto& agg : report.per_z) {
    by_e[agg.z.real()].emplace_back(agg.z.imag(), agg.lambda_phi_q50);
  }
  for (auto& [e, col] : by_e) {
    std::sort(col.begin(), col.end());
    for (std::size_t i = 1; i < col.size(); ++i) {
      if (col[i].second > col[i - 1].second) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Gap-ratio universality
// ---------------------------------------------------------------------------

/// Gap ratios of the eigenvalues falling inside [lo, hi]; needs at least
/// three of them.
inline std::vector<double> gap_ratio_statistics(const Spectrum& sp, double lo, double hi) {
  const int n = sp.size();
  const auto begin = std::lower_bound(sp.eigenvalues.data(), sp.eigenvalues.data() + n, lo);
  const auto end = std::upper_bound(sp.eigenvalues.data(), sp.eigenvalues.data() + n, hi);
  if (end - begin < 3) {
    throw TooFewEigenvalues("need at least 3 eigenvalues in the interval, have " +
                            std::to_string(end - begin));
  }
  return gap_ratios(std::span<const double>(begin, static_cast<std::size_t>(end - begin)));
}

/// Index-based bulk window: the middle `fraction` of the sorted spectrum.
inline std::pair<double, double> middle_fraction_interval(const Spectrum& sp, double fraction) {
  const int n = sp.size();
  const int skip = static_cast<int>(std::floor(n * (1.0 - fraction) / 2.0));
  const int lo = std::clamp(skip, 0, n - 2);
  const int hi = std::clamp(n - 1 - skip, lo + 1, n - 1);
  return {sp.eigenvalues[lo], sp.eigenvalues[hi]};
}

struct UniversalityReport {
  double ks = 0.0;
  std::vector<double> ratios_a;
  std::vector<double> ratios_b;
  double seconds = 0.0;
};

namespace detail {

inline std::vector<double> pooled_gap_ratios(const ExperimentPlan& plan, double bulk_fraction) {
  std::vector<std::vector<double>> per_sample(static_cast<std::size_t>(plan.samples));
  parallel_for(plan.samples, plan.threads, [&](int s) {
    const std::uint64_t seed = hash_combine(plan.base_seed, static_cast<std::uint64_t>(s));
    const Spectrum sp = eigen_decompose(sample_matrix(plan.spec, plan.model, seed), false);
    const auto [lo, hi] = middle_fraction_interval(sp, bulk_fraction);
    per_sample[static_cast<std::size_t>(s)] = gap_ratio_statistics(sp, lo, hi);
  });
  std::vector<double> pooled;
  for (const auto& v : per_sample) pooled.insert(pooled.end(), v.begin(), v.end());
  return pooled;
}

}  // namespace detail

/// Pool bulk gap ratios from two plans (typically the ensemble under test and
/// sampled GOE) and report the two-sample KS distance.
inline UniversalityReport run_universality(const ExperimentPlan& plan,
                                           const ExperimentPlan& reference_plan,
                                           double bulk_fraction = 1.0 / 3.0) {
  const auto t0 = std::chrono::steady_clock::now();
  UniversalityReport rep;
  rep.ratios_a = detail::pooled_gap_ratios(plan, bulk_fraction);
  rep.ratios_b = detail::pooled_gap_ratios(reference_plan, bulk_fraction);
  rep.ks = ks_distance(rep.ratios_a, rep.ratios_b);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

/// Gap ratios of i.i.d. uniform points: the Poisson control, whose ratio law
/// is far from GOE.  Used to confirm the detector actually discriminates.
inline std::vector<double> poisson_control_ratios(int n, int samples, std::uint64_t base_seed,
                                                  double bulk_fraction = 1.0 / 3.0) {
  std::vector<double> pooled;
  for (int s = 0; s < samples; ++s) {
    CounterRng rng(hash_combine(base_seed, static_cast<std::uint64_t>(s)));
    std::vector<double> pts(static_cast<std::size_t>(n));
    for (auto& x : pts) x = 4.0 * rng.next_unit() - 2.0;
    std::sort(pts.begin(), pts.end());
    const int skip = static_cast<int>(std::floor(n * (1.0 - bulk_fraction) / 2.0));
    const std::span<const double> window(pts.data() + skip,
                                         static_cast<std::size_t>(n - 2 * skip));
    const auto r = gap_ratios(window);
    pooled.insert(pooled.end(), r.begin(), r.end());
  }
  return pooled;
}

// ---------------------------------------------------------------------------
// Degree-tail experiment
// ---------------------------------------------------------------------------

struct DegreeTailOptions {
  double cutoff_quantile = 0.8;
  int bootstraps = 200;
  int threads = 1;
};

struct DegreeTailReport {
  TailFit fit;
  std::vector<double> degrees;  // pooled across samples, sample-major order
  double seconds = 0.0;
};

/// Sample 0/1 adjacency matrices from the spec, pool vertex degrees, and fit
/// the tail exponent beta of the degree distribution.
inline DegreeTailReport degree_tail_fit(const EnsembleSpec& spec, int samples,
                                        std::uint64_t base_seed,
                                        const DegreeTailOptions& opts = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Eigen::VectorXi> per_sample(static_cast<std::size_t>(samples));
  detail::parallel_for(samples, opts.threads, [&](int s) {
    per_sample[static_cast<std::size_t>(s)] =
        adjacency_degrees(spec, hash_combine(base_seed, static_cast<std::uint64_t>(s)));
  });
  DegreeTailReport rep;
  rep.degrees.reserve(static_cast<std::size_t>(samples) * spec.n);
  for (const auto& deg : per_sample) {
    for (int i = 0; i < deg.size(); ++i) rep.degrees.push_back(static_cast<double>(deg[i]));
  }
  rep.fit = hill_tail_fit(rep.degrees, opts.cutoff_quantile, opts.bootstraps, base_seed);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace clspec
