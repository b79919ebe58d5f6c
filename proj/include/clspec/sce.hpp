#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "clspec/ensemble.hpp"
#include "clspec/errors.hpp"
#include "clspec/numerics.hpp"

namespace clspec {

struct SolveOptions {
  double tol = 1e-12;
  int max_iter = 10000;        // counts fixed-point map evaluations
  double damping_floor = 1.0 / 64.0;
};

/// Solution of the rank-r self-consistent system at one z in the upper
/// half-plane.  g is recomputed from the final u, never stored stale.
struct SceSolution {
  cplx z;
  Eigen::VectorXcd u;  // r components
  cplx m;
  Eigen::VectorXcd g;  // N components, g_i = -1/(z + sum_j gamma_i^(j) u^(j))
  double residual;     // max over the r+1 equations of the absolute defect
  int iterations;
};

namespace detail {

/// The weighted-average system shared by the finite-N solver and the
/// limiting integral solver:
///   F_k(u) = -(1/n) sum_i w_ik / (z + sum_l w_il u_l)
/// with w the n x r factor matrix (gamma samples or quadrature values).
class LowRankSystem {
 public:
  LowRankSystem(const Eigen::MatrixXd& weights, cplx z) : w_(weights), z_(z) {}

  void apply(const Eigen::VectorXcd& u, Eigen::VectorXcd& fu) const {
    const int n = static_cast<int>(w_.rows());
    const int r = static_cast<int>(w_.cols());
    std::vector<CompensatedComplexSum> acc(static_cast<std::size_t>(r));
    for (int i = 0; i < n; ++i) {
      cplx d = z_;
      for (int l = 0; l < r; ++l) d += w_(i, l) * u[l];
      const cplx gi = -1.0 / d;
      for (int k = 0; k < r; ++k) acc[static_cast<std::size_t>(k)].add(w_(i, k) * gi);
    }
    for (int k = 0; k < r; ++k) fu[k] = acc[static_cast<std::size_t>(k)].value() / double(n);
  }

  /// m = (1/n) sum_i g_i(u), evaluated once from converged u.
  cplx mean_g(const Eigen::VectorXcd& u) const {
    const int n = static_cast<int>(w_.rows());
    CompensatedComplexSum acc;
    for (int i = 0; i < n; ++i) {
      cplx d = z_;
      for (int l = 0; l < static_cast<int>(w_.cols()); ++l) d += w_(i, l) * u[l];
      acc.add(-1.0 / d);
    }
    return acc.value() / double(n);
  }

  Eigen::VectorXcd g_vector(const Eigen::VectorXcd& u) const {
    const int n = static_cast<int>(w_.rows());
    Eigen::VectorXcd g(n);
    for (int i = 0; i < n; ++i) {
      cplx d = z_;
      for (int l = 0; l < static_cast<int>(w_.cols()); ++l) d += w_(i, l) * u[l];
      g[i] = -1.0 / d;
    }
    return g;
  }

 private:
  const Eigen::MatrixXd& w_;
  cplx z_;
};

struct IterationResult {
  Eigen::VectorXcd u;
  double residual;
  int iterations;
  bool converged;
};

inline double max_defect(const Eigen::VectorXcd& u, const Eigen::VectorXcd& fu) {
  double m = 0.0;
  for (Eigen::Index k = 0; k < u.size(); ++k) m = std::max(m, std::abs(u[k] - fu[k]));
  return m;
}

inline bool in_upper_half_plane(const Eigen::VectorXcd& u) {
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    if (!(u[k].imag() > 0.0)) return false;
  }
  return true;
}

/// Damped fixed-point iteration u <- (1-a) u + a F(u).  The step a starts at
/// 1 and halves whenever the candidate's residual fails to decrease or the
/// candidate leaves the upper half-plane; at the floor a non-decreasing step
/// is accepted, while leaving the half-plane at the floor is fatal.
template <class System>
IterationResult damped_fixed_point(const System& sys, Eigen::VectorXcd u,
                                   const SolveOptions& opts) {
  Eigen::VectorXcd fu(u.size()), cand(u.size()), fc(u.size());
  sys.apply(u, fu);
  double res = max_defect(u, fu);
  int evals = 1;
  double alpha = 1.0;
  const double floor = opts.damping_floor;
  while (res > opts.tol && evals < opts.max_iter) {
    cand = (1.0 - alpha) * u + alpha * fu;
    if (!in_upper_half_plane(cand)) {
      if (alpha <= floor * (1.0 + 1e-12)) {
        throw LeftUpperHalfPlane("iterate left the upper half-plane at the damping floor");
      }
      alpha = std::max(alpha / 2.0, floor);
      continue;
    }
    sys.apply(cand, fc);
    ++evals;
    const double rc = max_defect(cand, fc);
    if (rc < res || alpha <= floor * (1.0 + 1e-12)) {
      u.swap(cand);
      fu.swap(fc);
      res = rc;
    } else {
      alpha = std::max(alpha / 2.0, floor);
    }
  }
  return {std::move(u), res, evals, res <= opts.tol};
}

inline Eigen::VectorXcd cold_start(const Eigen::MatrixXd& weights) {
  const int r = static_cast<int>(weights.cols());
  Eigen::VectorXcd u(r);
  for (int k = 0; k < r; ++k) u[k] = cplx(0.0, weights.col(k).mean());
  return u;
}

}  // namespace detail

/// Solve the rank-r self-consistent system at z (Im z > 0).  Optionally
/// warm-started; the cold start is u^(k) = i * mean(gamma^(k)).
inline SceSolution solve_sce(const EnsembleSpec& spec, cplx z, const SolveOptions& opts = {},
                             const Eigen::VectorXcd* warm_start = nullptr) {
  if (!(z.imag() > 0.0)) throw std::invalid_argument("solve_sce: need Im z > 0");
  const Eigen::MatrixXd w = spec.factor_matrix();
  const detail::LowRankSystem sys(w, z);
  Eigen::VectorXcd u0 =
      (warm_start && warm_start->size() == spec.rank()) ? *warm_start : detail::cold_start(w);
  auto it = detail::damped_fixed_point(sys, std::move(u0), opts);
  if (!it.converged) {
    std::vector<cplx> best(it.u.data(), it.u.data() + it.u.size());
    throw NoConvergence("solve_sce: residual " + std::to_string(it.residual) + " after " +
                            std::to_string(it.iterations) + " evaluations",
                        it.residual, it.iterations, std::move(best));
  }
  SceSolution sol;
  sol.z = z;
  sol.u = std::move(it.u);
  sol.m = sys.mean_g(sol.u);
  sol.g = sys.g_vector(sol.u);
  sol.residual = it.residual;
  sol.iterations = it.iterations;
  return sol;
}

/// Solve along a z grid (caller orders it; descending Im z for continuation).
/// Each point is warm-started from the previous solution.
inline std::vector<SceSolution> solve_grid(const EnsembleSpec& spec, std::span<const cplx> zs,
                                           const SolveOptions& opts = {}) {
  std::vector<SceSolution> out;
  out.reserve(zs.size());
  for (std::size_t idx = 0; idx < zs.size(); ++idx) {
    const Eigen::VectorXcd* warm = out.empty() ? nullptr : &out.back().u;
    try {
      out.push_back(solve_sce(spec, zs[idx], opts, warm));
    } catch (NoConvergence& e) {
      e.grid_index = static_cast<int>(idx);
      throw;
    } catch (LeftUpperHalfPlane& e) {
      e.grid_index = static_cast<int>(idx);
      throw;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stability certificate
// ---------------------------------------------------------------------------

/// T_kl = (1/N) sum_i gamma_i^(k) gamma_i^(l) |g_i|^2; its spectral radius is
/// at most 1 for any solution with Im z > 0.
struct StabilityCertificate {
  Eigen::MatrixXd t;  // r x r, symmetric, nonnegative entries
  double spectral_radius;
  double distance_to_one;  // 1 - spectral_radius
};

inline StabilityCertificate stability_certificate(const EnsembleSpec& spec,
                                                  const SceSolution& sol) {
  const int r = spec.rank();
  Eigen::MatrixXd t(r, r);
  for (int k = 0; k < r; ++k) {
    for (int l = k; l < r; ++l) {
      CompensatedSum acc;
      for (int i = 0; i < spec.n; ++i) {
        acc.add(spec.gammas[static_cast<std::size_t>(k)][i] *
                spec.gammas[static_cast<std::size_t>(l)][i] * std::norm(sol.g[i]));
      }
      t(k, l) = acc.value() / spec.n;
      t(l, k) = t(k, l);
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
  const double rho = es.eigenvalues().maxCoeff();
  return {std::move(t), rho, 1.0 - rho};
}

// ---------------------------------------------------------------------------
// Bulk detection
// ---------------------------------------------------------------------------

/// Maximal E-intervals on which Im m(E + i eta) > c for every probed eta in
/// [eta_probe, 1].  Input: solutions on an E-grid carrying several eta levels
/// per E (solutions outside [eta_probe, 1] are ignored).
inline std::vector<std::pair<double, double>> detect_bulk(std::span<const SceSolution> sols,
                                                          double c_threshold, double eta_probe) {
  struct Acc {
    double min_im = std::numeric_limits<double>::infinity();
    bool seen = false;
  };
  std::vector<std::pair<double, Acc>> by_e;  // grid E values are exact doubles
  for (const auto& s : sols) {
    const double eta = s.z.imag();
    if (eta < eta_probe * (1.0 - 1e-12) || eta > 1.0 + 1e-12) continue;
    const double e = s.z.real();
    auto it = std::find_if(by_e.begin(), by_e.end(),
                           [e](const auto& p) { return p.first == e; });
    if (it == by_e.end()) {
      by_e.emplace_back(e, Acc{});
      it = std::prev(by_e.end());
    }
    it->second.min_im = std::min(it->second.min_im, s.m.imag());
    it->second.seen = true;
  }
  std::sort(by_e.begin(), by_e.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  std::vector<std::pair<double, double>> intervals;
  bool open = false;
  double lo = 0.0, hi = 0.0;
  for (const auto& [e, acc] : by_e) {
    const bool ok = acc.seen && acc.min_im > c_threshold;
    if (ok && !open) {
      open = true;
      lo = e;
      hi = e;
    } else if (ok) {
      hi = e;
    } else if (open) {
      intervals.emplace_back(lo, hi);
      open = false;
    }
  }
  if (open) intervals.emplace_back(lo, hi);
  return intervals;
}

/// z grid for a bulk scan: for each E (ascending), geometric eta levels from
/// 1 down to eta_probe, so solve_grid's warm starts flow naturally.
inline std::vector<cplx> bulk_scan_grid(double e_min, double e_max, int n_e, double eta_probe) {
  if (n_e < 1 || !(eta_probe > 0.0) || eta_probe > 1.0) {
    throw std::invalid_argument("bulk_scan_grid: bad arguments");
  }
  const int levels = std::max(2, 1 + static_cast<int>(std::ceil(std::log(1.0 / eta_probe) /
                                                                std::log(3.0))));
  std::vector<double> etas(static_cast<std::size_t>(levels));
  const double ratio = std::pow(eta_probe, 1.0 / (levels - 1));
  etas[0] = 1.0;
  for (int l = 1; l + 1 < levels; ++l) etas[static_cast<std::size_t>(l)] = etas[l - 1] * ratio;
  etas[static_cast<std::size_t>(levels - 1)] = eta_probe;

  std::vector<cplx> zs;
  zs.reserve(static_cast<std::size_t>(n_e) * etas.size());
  for (int ei = 0; ei < n_e; ++ei) {
    const double e = (n_e == 1) ? e_min : e_min + (e_max - e_min) * ei / (n_e - 1);
    for (double eta : etas) zs.emplace_back(e, eta);
  }
  return zs;
}

inline std::vector<std::pair<double, double>> scan_bulk(const EnsembleSpec& spec, double e_min,
                                                        double e_max, int n_e, double eta_probe,
                                                        double c_threshold,
                                                        const SolveOptions& opts = {}) {
  const auto zs = bulk_scan_grid(e_min, e_max, n_e, eta_probe);
  const auto sols = solve_grid(spec, zs, opts);
  return detect_bulk(sols, c_threshold, eta_probe);
}

}  // namespace clspec
