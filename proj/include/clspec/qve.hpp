#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <span>
#include <utility>
#include <vector>

#include "clspec/errors.hpp"
#include "clspec/numerics.hpp"
#include "clspec/sce.hpp"

namespace clspec {

enum class KernelKind { LowRank, Flat, Explicit };

/// Symmetric nonnegative kernel s(x,y) on [0,1]^2, discretized as cell
/// averages on a dyadic n x n grid (n a power of two).
struct KernelGrid {
  int n = 0;
  Eigen::MatrixXd s;  // n x n cell averages, kernel scale (matrix entries are s/N)
  KernelKind kind = KernelKind::Explicit;

  double min_cell() const { return s.minCoeff(); }
};

namespace detail {

inline bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

/// Cell averages of the N-step staircase f(x) = gamma_ceil(xN) on an n-cell
/// dyadic grid, via the exact integral of the staircase.  For n == N this is
/// the gamma vector itself.
inline Eigen::VectorXd staircase_cell_means(const Eigen::VectorXd& gamma, int cells) {
  const int n = static_cast<int>(gamma.size());
  // prefix integral: F(t) = int_0^t f, with f piecewise constant on [i/N,(i+1)/N)
  Eigen::VectorXd prefix(n + 1);
  prefix[0] = 0.0;
  for (int i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + gamma[i] / n;
  auto integral = [&](double t) {
    const double scaled = t * n;
    const int full = std::min(n, static_cast<int>(std::floor(scaled)));
    double v = prefix[full];
    if (full < n) v += (scaled - full) * gamma[full] / n;
    return v;
  };
  Eigen::VectorXd means(cells);
  for (int a = 0; a < cells; ++a) {
    const double lo = static_cast<double>(a) / cells;
    const double hi = static_cast<double>(a + 1) / cells;
    means[a] = (integral(hi) - integral(lo)) * cells;
  }
  return means;
}

}  // namespace detail

/// Kernel built from low-rank factors: s(x,y) = sum_k f_k(x) f_k(y) with f_k
/// the staircase of gamma^(k).  Cell averaging respects the product form.
inline KernelGrid low_rank_kernel(const std::vector<Eigen::VectorXd>& gammas, int cells) {
  if (!detail::is_power_of_two(cells)) {
    throw std::invalid_argument("low_rank_kernel: cell count must be a power of two");
  }
  if (gammas.empty()) throw std::invalid_argument("low_rank_kernel: empty factor list");
  KernelGrid k;
  k.n = cells;
  k.kind = KernelKind::LowRank;
  k.s = Eigen::MatrixXd::Zero(cells, cells);
  for (const auto& g : gammas) {
    const Eigen::VectorXd f = detail::staircase_cell_means(g, cells);
    k.s.noalias() += f * f.transpose();
  }
  return k;
}

inline KernelGrid low_rank_kernel(const EnsembleSpec& spec, int cells) {
  return low_rank_kernel(spec.gammas, cells);
}

/// Constant kernel s(x,y) = value (the flat ensemble with c = C = value).
inline KernelGrid flat_kernel(int cells, double value) {
  if (!detail::is_power_of_two(cells)) {
    throw std::invalid_argument("flat_kernel: cell count must be a power of two");
  }
  if (!(value > 0.0)) throw std::invalid_argument("flat_kernel: value must be positive");
  return {cells, Eigen::MatrixXd::Constant(cells, cells, value), KernelKind::Flat};
}

/// Arbitrary symmetric nonnegative kernel from explicit cell values.
inline KernelGrid explicit_kernel(Eigen::MatrixXd s) {
  const int n = static_cast<int>(s.rows());
  if (s.cols() != n) throw std::invalid_argument("explicit_kernel: matrix must be square");
  if (!detail::is_power_of_two(n)) {
    throw std::invalid_argument("explicit_kernel: cell count must be a power of two");
  }
  for (int a = 0; a < n; ++a) {
    for (int b = a; b < n; ++b) {
      if (s(a, b) != s(b, a)) throw std::invalid_argument("explicit_kernel: kernel not symmetric");
      if (s(a, b) < 0.0) throw std::invalid_argument("explicit_kernel: negative cell value");
    }
  }
  return {n, std::move(s), KernelKind::Explicit};
}

// ---------------------------------------------------------------------------
// QVE solver
// ---------------------------------------------------------------------------

struct QveSolution {
  cplx z;
  Eigen::VectorXcd g;  // per-cell values
  cplx m0;             // mean of g
  double residual;
  int iterations;
};

namespace detail {

/// Dense kernel application: F(g)_a = -1/(z + (1/n)(S g)_a).  Low-rank and
/// general kernels share this path.
class KernelSystem {
 public:
  KernelSystem(const Eigen::MatrixXd& s, cplx z) : s_(s), z_(z) {}

  void apply(const Eigen::VectorXcd& g, Eigen::VectorXcd& fg) const {
    const double n = static_cast<double>(s_.rows());
    const Eigen::VectorXd sr = s_ * g.real().matrix();
    const Eigen::VectorXd si = s_ * g.imag().matrix();
    for (Eigen::Index a = 0; a < g.size(); ++a) {
      fg[a] = -1.0 / (z_ + cplx(sr[a] / n, si[a] / n));
    }
  }

 private:
  const Eigen::MatrixXd& s_;
  cplx z_;
};

}  // namespace detail

inline QveSolution solve_qve(const KernelGrid& kernel, cplx z, const SolveOptions& opts = {},
                             const Eigen::VectorXcd* warm_start = nullptr) {
  if (!(z.imag() > 0.0)) throw std::invalid_argument("solve_qve: need Im z > 0");
  const detail::KernelSystem sys(kernel.s, z);
  Eigen::VectorXcd g0;
  if (warm_start && warm_start->size() == kernel.n) {
    g0 = *warm_start;
  } else {
    g0 = Eigen::VectorXcd::Constant(kernel.n, cplx(0.0, 1.0 / std::max(1.0, z.imag())));
  }
  auto it = detail::damped_fixed_point(sys, std::move(g0), opts);
  if (!it.converged) {
    std::vector<cplx> best(it.u.data(), it.u.data() + it.u.size());
    throw NoConvergence("solve_qve: residual " + std::to_string(it.residual) + " after " +
                            std::to_string(it.iterations) + " evaluations",
                        it.residual, it.iterations, std::move(best));
  }
  CompensatedComplexSum acc;
  for (Eigen::Index a = 0; a < it.u.size(); ++a) acc.add(it.u[a]);
  QveSolution sol;
  sol.z = z;
  sol.m0 = acc.value() / double(kernel.n);
  sol.g = std::move(it.u);
  sol.residual = it.residual;
  sol.iterations = it.iterations;
  return sol;
}

inline std::vector<QveSolution> solve_qve_grid(const KernelGrid& kernel, std::span<const cplx> zs,
                                               const SolveOptions& opts = {}) {
  std::vector<QveSolution> out;
  out.reserve(zs.size());
  for (std::size_t idx = 0; idx < zs.size(); ++idx) {
    const Eigen::VectorXcd* warm = out.empty() ? nullptr : &out.back().g;
    try {
      out.push_back(solve_qve(kernel, zs[idx], opts, warm));
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
// Limiting integral system
// ---------------------------------------------------------------------------

struct LimitSolution {
  cplx z;
  Eigen::VectorXcd u;  // r components
  cplx m0;
  double residual;
  int iterations;
};

/// Solve the limiting integral system on caller-supplied quadrature samples.
/// f_nodes is nodes x r: column k holds f_k evaluated on the quadrature grid.
/// Requires f_k >= 1 at every node and (1/n) sum f_k^2 <= flatness_bound per
/// factor (the quadrature estimate of the L2 bound).
inline LimitSolution solve_limit_sce(const Eigen::MatrixXd& f_nodes, cplx z,
                                     const SolveOptions& opts = {},
                                     double flatness_bound = 100.0) {
  if (!(z.imag() > 0.0)) throw std::invalid_argument("solve_limit_sce: need Im z > 0");
  const int nodes = static_cast<int>(f_nodes.rows());
  const int r = static_cast<int>(f_nodes.cols());
  if (nodes < 1 || r < 1) throw std::invalid_argument("solve_limit_sce: empty node matrix");
  for (int k = 0; k < r; ++k) {
    for (int a = 0; a < nodes; ++a) {
      if (!(f_nodes(a, k) >= 1.0)) {
        throw DomainViolation("solve_limit_sce: f_" + std::to_string(k + 1) + " < 1 at node " +
                              std::to_string(a + 1));
      }
    }
    CompensatedSum sq;
    for (int a = 0; a < nodes; ++a) sq.add(f_nodes(a, k) * f_nodes(a, k));
    const double est = sq.value() / nodes;
    if (est > flatness_bound) {
      throw ViolatedFlatness("solve_limit_sce: quadrature estimate of int f_" +
                                 std::to_string(k + 1) + "^2 = " + std::to_string(est) +
                                 " exceeds " + std::to_string(flatness_bound),
                             est, flatness_bound);
    }
  }
  const detail::LowRankSystem sys(f_nodes, z);
  auto it = detail::damped_fixed_point(sys, detail::cold_start(f_nodes), opts);
  if (!it.converged) {
    std::vector<cplx> best(it.u.data(), it.u.data() + it.u.size());
    throw NoConvergence("solve_limit_sce: residual " + std::to_string(it.residual) + " after " +
                            std::to_string(it.iterations) + " evaluations",
                        it.residual, it.iterations, std::move(best));
  }
  LimitSolution sol;
  sol.z = z;
  sol.m0 = sys.mean_g(it.u);
  sol.u = std::move(it.u);
  sol.residual = it.residual;
  sol.iterations = it.iterations;
  return sol;
}

// ---------------------------------------------------------------------------
// Stability probe
// ---------------------------------------------------------------------------

struct StabilityProbeResult {
  double max_ratio = 0.0;          // max over the grid of ||g_hat - g||_L2 / ||S - S_hat||
  bool supported_by_theory = true; // false when a kernel has zero cells
};

/// Measured Lipschitz ratio of the solution map S -> g over a z grid.  The
/// kernel distance is the discrete L2([0,1]^2) norm (Frobenius / n); the
/// solution distance is the discrete L2[0,1] norm.  Identical kernels report
/// ratio 0 by convention.
inline StabilityProbeResult kernel_stability_probe(const KernelGrid& kernel,
                                                   const KernelGrid& kernel_hat,
                                                   std::span<const cplx> z_grid,
                                                   const SolveOptions& opts = {},
                                                   double max_perturbation = 1.0) {
  if (kernel.n != kernel_hat.n) {
    throw std::invalid_argument("kernel_stability_probe: grids differ in size");
  }
  StabilityProbeResult res;
  res.supported_by_theory = kernel.min_cell() > 0.0 && kernel_hat.min_cell() > 0.0;
  const double ds = (kernel.s - kernel_hat.s).norm() / kernel.n;
  if (ds == 0.0) return res;
  if (ds > max_perturbation) {
    throw std::invalid_argument("kernel_stability_probe: perturbation " + std::to_string(ds) +
                                " exceeds allowed " + std::to_string(max_perturbation));
  }
  Eigen::VectorXcd warm_a, warm_b;
  for (const cplx z : z_grid) {
    QveSolution a = solve_qve(kernel, z, opts, warm_a.size() ? &warm_a : nullptr);
    QveSolution b = solve_qve(kernel_hat, z, opts, warm_b.size() ? &warm_b : nullptr);
    const double dist = std::sqrt((a.g - b.g).squaredNorm() / kernel.n);
    res.max_ratio = std::max(res.max_ratio, dist / ds);
    warm_a = std::move(a.g);
    warm_b = std::move(b.g);
  }
  return res;
}

}  // namespace clspec
