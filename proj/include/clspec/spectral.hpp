#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "clspec/ensemble.hpp"
#include "clspec/errors.hpp"
#include "clspec/numerics.hpp"
#include "clspec/rng.hpp"
#include "clspec/sce.hpp"

#if defined(CLSPEC_HAVE_LAPACKE)
#include <lapacke.h>
#endif

namespace clspec {

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Full symmetric eigendecomposition of one sampled matrix.  Eigenvectors are
/// stored row-major: row i holds the i-th component of every eigenvector, the
/// access pattern all resolvent statistics use.
struct Spectrum {
  Eigen::VectorXd eigenvalues;  // ascending
  RowMatrixXd eigenvectors;     // column alpha = eigenvector u_alpha; empty unless retained
  std::uint64_t source_seed = 0;

  bool has_vectors() const { return eigenvectors.size() > 0; }
  int size() const { return static_cast<int>(eigenvalues.size()); }
};

namespace detail {

inline void check_spectrum_identities(const Eigen::MatrixXd& h, const Eigen::VectorXd& w) {
  const int n = static_cast<int>(h.rows());
  CompensatedSum tr, sumw, fro, sumw2;
  for (int i = 0; i < n; ++i) {
    tr.add(h(i, i));
    sumw.add(w[i]);
    sumw2.add(w[i] * w[i]);
  }
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) fro.add(h(i, j) * h(i, j));
  }
  const double scale = std::max(1.0, w.cwiseAbs().maxCoeff());
  if (std::abs(sumw.value() - tr.value()) > 1e-8 * n * scale) {
    throw DecompositionFailure("eigenvalue sum does not match trace");
  }
  if (std::abs(sumw2.value() - fro.value()) > 1e-8 * std::max(1.0, fro.value())) {
    throw DecompositionFailure("eigenvalue square sum does not match Frobenius norm");
  }
}

inline void spot_check_orthonormality(const RowMatrixXd& u) {
  // A handful of column inner products; the full N^3 check lives in tests.
  const int n = static_cast<int>(u.rows());
  const int k = std::min(8, n);
  for (int a = 0; a < k; ++a) {
    const int b = (a * 7 + 3) % n;
    const double dot = u.col(a).dot(u.col(b));
    const double expect = (a == b) ? 1.0 : 0.0;
    if (std::abs(dot - expect) > 1e-8) {
      throw DecompositionFailure("eigenvector orthonormality spot check failed");
    }
  }
}

}  // namespace detail

inline Spectrum eigen_decompose(const Eigen::MatrixXd& h, bool keep_vectors,
                                std::uint64_t source_seed = 0) {
  const int n = static_cast<int>(h.rows());
  if (h.cols() != n || n < 1) throw std::invalid_argument("eigen_decompose: square matrix required");
  if (h != h.transpose()) throw std::invalid_argument("eigen_decompose: matrix not symmetric");

  Spectrum sp;
  sp.source_seed = source_seed;
#if defined(CLSPEC_HAVE_LAPACKE)
  RowMatrixXd a = h;
  sp.eigenvalues.resize(n);
  const int info = LAPACKE_dsyevd(LAPACK_ROW_MAJOR, keep_vectors ? 'V' : 'N', 'L', n, a.data(), n,
                                  sp.eigenvalues.data());
  if (info != 0) {
    throw DecompositionFailure("dsyevd failed with info " + std::to_string(info));
  }
  if (keep_vectors) sp.eigenvectors = std::move(a);
#else
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
      h, keep_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw DecompositionFailure("Eigen SelfAdjointEigenSolver did not converge");
  }
  sp.eigenvalues = es.eigenvalues();
  if (keep_vectors) sp.eigenvectors = es.eigenvectors();
#endif
  detail::check_spectrum_identities(h, sp.eigenvalues);
  if (keep_vectors) detail::spot_check_orthonormality(sp.eigenvectors);
  return sp;
}

inline Spectrum eigen_decompose(const SampledMatrix& m, bool keep_vectors) {
  return eigen_decompose(m.entries, keep_vectors, m.seed);
}

// ---------------------------------------------------------------------------
// Resolvent statistics
// ---------------------------------------------------------------------------

/// m_N(z) = (1/N) sum_i 1/(lambda_i - z).
inline cplx empirical_stieltjes(const Spectrum& sp, cplx z) {
  if (!(z.imag() > 0.0)) throw std::invalid_argument("empirical_stieltjes: need Im z > 0");
  CompensatedComplexSum acc;
  for (int i = 0; i < sp.size(); ++i) acc.add(1.0 / (sp.eigenvalues[i] - z));
  return acc.value() / double(sp.size());
}

namespace detail {

inline void require_vectors(const Spectrum& sp) {
  if (!sp.has_vectors()) throw VectorsNotRetained("operation requires retained eigenvectors");
}

/// Real and imaginary parts of the eigenvalue weights 1/(lambda - z).
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> resolvent_weights(const Spectrum& sp, cplx z) {
  const int n = sp.size();
  Eigen::VectorXd wr(n), wi(n);
  for (int a = 0; a < n; ++a) {
    const cplx w = 1.0 / (sp.eigenvalues[a] - z);
    wr[a] = w.real();
    wi[a] = w.imag();
  }
  return {std::move(wr), std::move(wi)};
}

}  // namespace detail

/// All diagonal entries G_ii(z) = sum_alpha (u_alpha^i)^2 / (lambda_alpha - z).
inline Eigen::VectorXcd resolvent_diagonal(const Spectrum& sp, cplx z) {
  detail::require_vectors(sp);
  const auto [wr, wi] = detail::resolvent_weights(sp, z);
  const int n = sp.size();
  Eigen::VectorXcd d(n);
  Eigen::VectorXd sq(n);
  for (int i = 0; i < n; ++i) {
    sq = sp.eigenvectors.row(i).array().square();
    d[i] = cplx(sq.dot(wr), sq.dot(wi));
  }
  return d;
}

/// One full resolvent row (G_ij for fixed i, all j).
inline Eigen::VectorXcd resolvent_row(const Spectrum& sp, cplx z, int i) {
  detail::require_vectors(sp);
  const auto [wr, wi] = detail::resolvent_weights(sp, z);
  const Eigen::VectorXd ri = sp.eigenvectors.row(i);
  const Eigen::VectorXd re = sp.eigenvectors * ri.cwiseProduct(wr);
  const Eigen::VectorXd im = sp.eigenvectors * ri.cwiseProduct(wi);
  Eigen::VectorXcd row(sp.size());
  for (int j = 0; j < sp.size(); ++j) row[j] = cplx(re[j], im[j]);
  return row;
}

/// Selected entries G_ij(z) for a list of index pairs.
inline std::vector<cplx> resolvent_entries(const Spectrum& sp, cplx z,
                                           std::span<const std::pair<int, int>> pairs) {
  detail::require_vectors(sp);
  const auto [wr, wi] = detail::resolvent_weights(sp, z);
  std::vector<cplx> out;
  out.reserve(pairs.size());
  Eigen::VectorXd prod(sp.size());
  for (const auto& [i, j] : pairs) {
    prod = sp.eigenvectors.row(i).cwiseProduct(sp.eigenvectors.row(j));
    out.emplace_back(prod.dot(wr), prod.dot(wi));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Local-law record
// ---------------------------------------------------------------------------

/// Control parameter Phi = 1/sqrt(q) + 1/sqrt(N eta).
inline double phi_parameter(double q, int n, double eta) {
  return 1.0 / std::sqrt(q) + 1.0 / std::sqrt(n * eta);
}

struct LocalLawRecord {
  cplx z;
  double lambda_d;            // max_i theta_i |G_ii - g_i|
  double lambda_o;            // max over sampled pairs of sqrt(theta_i theta_j) |G_ij|
  double lambda;              // max of the two
  double phi;
  double max_schur_residual;  // max_i |R_i| / theta_i
  std::uint64_t sample_seed;
  long pair_budget;
  bool exhaustive_pairs;
};

/// Compute one local-law record from a decomposed sample and the solved SCE
/// at the same z.  Off-diagonal pairs are sampled deterministically from the
/// sample seed unless the budget covers all pairs.
inline LocalLawRecord local_law_record(const Spectrum& sp, const EnsembleSpec& spec,
                                       const SceSolution& sol, cplx z, long pair_budget) {
  detail::require_vectors(sp);
  if (sp.size() != spec.n) throw std::invalid_argument("local_law_record: size mismatch");
  if (std::abs(sol.z - z) > 1e-12 * (1.0 + std::abs(z))) {
    throw std::invalid_argument("local_law_record: SCE solution solved at a different z");
  }

  const int n = spec.n;
  const int r = spec.rank();
  const Eigen::VectorXcd gdiag = resolvent_diagonal(sp, z);
  const Eigen::VectorXd theta = spec.thetas();

  double lambda_d = 0.0;
  for (int i = 0; i < n; ++i) {
    lambda_d = std::max(lambda_d, theta[i] * std::abs(gdiag[i] - sol.g[i]));
  }

  // Schur defect via the low-rank structure:
  //   sum_k s_ik G_kk = sum_l gamma_i^(l) t_l,  t_l = (1/N) sum_k gamma_k^(l) G_kk.
  Eigen::VectorXcd t(r);
  for (int l = 0; l < r; ++l) {
    CompensatedComplexSum acc;
    for (int k = 0; k < n; ++k) acc.add(spec.gammas[static_cast<std::size_t>(l)][k] * gdiag[k]);
    t[l] = acc.value() / double(n);
  }
  double max_schur = 0.0;
  for (int i = 0; i < n; ++i) {
    cplx ri = 1.0 / gdiag[i] + z;
    for (int l = 0; l < r; ++l) ri += spec.gammas[static_cast<std::size_t>(l)][i] * t[l];
    max_schur = std::max(max_schur, std::abs(ri) / theta[i]);
  }

  const auto [wr, wi] = detail::resolvent_weights(sp, z);
  const long total_pairs = static_cast<long>(n) * (n - 1) / 2;
  const bool exhaustive = total_pairs <= pair_budget;
  double lambda_o = 0.0;
  Eigen::VectorXd prod(n);
  auto offdiag = [&](int i, int j) {
    prod = sp.eigenvectors.row(i).cwiseProduct(sp.eigenvectors.row(j));
    const double re = prod.dot(wr);
    const double im = prod.dot(wi);
    const double v = std::sqrt(theta[i] * theta[j]) * std::hypot(re, im);
    lambda_o = std::max(lambda_o, v);
  };
  if (exhaustive) {
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) offdiag(i, j);
    }
  } else {
    CounterRng prng(hash_combine(sp.source_seed, 0x70616972));  // "pair"
    for (long b = 0; b < pair_budget; ++b) {
      const int i = static_cast<int>(prng.next_u64() % static_cast<std::uint64_t>(n));
      const int j = static_cast<int>(prng.next_u64() % static_cast<std::uint64_t>(n));
      if (i == j) continue;
      offdiag(i, j);
    }
  }

  LocalLawRecord rec;
  rec.z = z;
  rec.lambda_d = lambda_d;
  rec.lambda_o = lambda_o;
  rec.lambda = std::max(lambda_d, lambda_o);
  rec.phi = phi_parameter(spec.q, n, z.imag());
  rec.max_schur_residual = max_schur;
  rec.sample_seed = sp.source_seed;
  rec.pair_budget = pair_budget;
  rec.exhaustive_pairs = exhaustive;
  return rec;
}

// ---------------------------------------------------------------------------
// Eigenvector diagnostics
// ---------------------------------------------------------------------------

/// Sup-norm delocalization statistic: max over eigenvectors with eigenvalue
/// in [lo, hi] of N * max_i |u_k^i|^2.  Fully delocalized vectors score O(1)
/// up to log factors; a standard basis vector scores N.
inline double delocalization_profile(const Spectrum& sp, double lo, double hi) {
  detail::require_vectors(sp);
  const int n = sp.size();
  const auto begin = std::lower_bound(sp.eigenvalues.data(), sp.eigenvalues.data() + n, lo);
  const auto end = std::upper_bound(sp.eigenvalues.data(), sp.eigenvalues.data() + n, hi);
  const int a0 = static_cast<int>(begin - sp.eigenvalues.data());
  const int a1 = static_cast<int>(end - sp.eigenvalues.data());
  if (a0 >= a1) throw EmptyBulk("no eigenvalue in the requested interval");
  double best = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int a = a0; a < a1; ++a) {
      best = std::max(best, sp.eigenvectors(i, a) * sp.eigenvectors(i, a));
    }
  }
  return best * n;
}

/// Dyadic eigenvalue counts around E at scale N^(delta-1): bin 0 is the ball
/// of radius w = N^(delta-1), bin n the annulus (2^(n-1) w, 2^n w], for
/// n = 1..floor(log2 N).
inline std::vector<long> dyadic_count_profile(const Spectrum& sp, double e, double delta) {
  const int n = sp.size();
  const double w = std::pow(static_cast<double>(n), delta - 1.0);
  const int levels = static_cast<int>(std::floor(std::log2(static_cast<double>(n))));
  std::vector<long> counts(static_cast<std::size_t>(levels) + 1, 0);
  auto count_within = [&](double radius) {
    const auto lo = std::lower_bound(sp.eigenvalues.data(), sp.eigenvalues.data() + n, e - radius);
    const auto hi = std::upper_bound(sp.eigenvalues.data(), sp.eigenvalues.data() + n, e + radius);
    return static_cast<long>(hi - lo);
  };
  long inner = count_within(w);
  counts[0] = inner;
  for (int lvl = 1; lvl <= levels; ++lvl) {
    const long outer = count_within(std::ldexp(w, lvl));
    counts[static_cast<std::size_t>(lvl)] = outer - inner;
    inner = outer;
  }
  return counts;
}

}  // namespace clspec
