#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "clspec/errors.hpp"
#include "clspec/numerics.hpp"
#include "clspec/rng.hpp"

namespace clspec {

/// Dense storage cap; samplers and the CLI refuse larger N.
inline constexpr int kDenseCap = 8192;

enum class Model { RandomSign, CenteredZeroOne, Goe };

inline std::string model_name(Model m) {
  switch (m) {
    case Model::RandomSign: return "random_sign";
    case Model::CenteredZeroOne: return "centered01";
    case Model::Goe: return "goe";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Profiles
// ---------------------------------------------------------------------------

/// gamma_i = (i/N)^(-mu) for i = 1..N, nonincreasing, gamma_N = 1.
/// Requires 0 < mu < 1/2 (boundaries excluded).
inline Eigen::VectorXd power_law_profile(int n, double mu) {
  if (!(mu > 0.0 && mu < 0.5)) {
    throw MuOutOfRange("power_law_profile: mu must lie in the open interval (0, 1/2), got " +
                       std::to_string(mu));
  }
  if (n < 1) throw std::invalid_argument("power_law_profile: n must be positive");
  Eigen::VectorXd g(n);
  for (int i = 0; i < n; ++i) {
    g[i] = std::pow(static_cast<double>(i + 1) / n, -mu);
  }
  return g;
}

inline Eigen::VectorXd constant_profile(int n, double value = 1.0) {
  if (n < 1) throw std::invalid_argument("constant_profile: n must be positive");
  return Eigen::VectorXd::Constant(n, value);
}

/// Piecewise-constant profile: block b takes `values[b]` on a stretch of
/// round(proportions[b] * N) indices.  Proportions must sum to 1.
inline Eigen::VectorXd block_profile(int n, const std::vector<double>& values,
                                     const std::vector<double>& proportions) {
  if (values.empty() || values.size() != proportions.size()) {
    throw std::invalid_argument("block_profile: values/proportions size mismatch");
  }
  double total = 0.0;
  for (double p : proportions) {
    if (!(p > 0.0)) throw std::invalid_argument("block_profile: proportions must be positive");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("block_profile: proportions must sum to 1");
  }
  Eigen::VectorXd g(n);
  int pos = 0;
  double cum = 0.0;
  for (std::size_t b = 0; b < values.size(); ++b) {
    cum += proportions[b];
    const int end = (b + 1 == values.size()) ? n : std::min(n, static_cast<int>(std::lround(cum * n)));
    for (; pos < end; ++pos) g[pos] = values[b];
  }
  for (; pos < n; ++pos) g[pos] = values.back();
  return g;
}

// ---------------------------------------------------------------------------
// Ensemble specification
// ---------------------------------------------------------------------------

/// Low-rank variance profile s_ij = (1/N) sum_k gamma_i^(k) gamma_j^(k) with
/// sparsity q = N^kappa.  Validated on construction via build_spec().
struct EnsembleSpec {
  int n = 0;
  double kappa = 1.0;
  double q = 1.0;  // N^kappa
  double flatness_bound = 100.0;
  std::vector<Eigen::VectorXd> gammas;  // r vectors of length n
  bool near_sparsity_bound = false;     // max q*s_ij > 0.99 (soft warning only)

  int rank() const { return static_cast<int>(gammas.size()); }

  /// s_ij, evaluated lazily; never materialized as an N x N matrix.
  double s(int i, int j) const {
    double acc = 0.0;
    for (const auto& g : gammas) acc += g[i] * g[j];
    return acc / n;
  }

  /// theta_i = sum_k gamma_i^(k) >= r >= 1.
  double theta(int i) const {
    double acc = 0.0;
    for (const auto& g : gammas) acc += g[i];
    return acc;
  }

  Eigen::VectorXd thetas() const {
    Eigen::VectorXd t = Eigen::VectorXd::Zero(n);
    for (const auto& g : gammas) t += g;
    return t;
  }

  /// (1/N) sum_i gamma_i^(k).
  double gamma_mean(int k) const { return gammas[static_cast<std::size_t>(k)].mean(); }

  /// n x r factor matrix (column k = gamma^(k)).
  Eigen::MatrixXd factor_matrix() const {
    Eigen::MatrixXd w(n, rank());
    for (int k = 0; k < rank(); ++k) w.col(k) = gammas[static_cast<std::size_t>(k)];
    return w;
  }
};

inline EnsembleSpec build_spec(int n, double kappa, std::vector<Eigen::VectorXd> gammas,
                               double flatness_bound = 100.0) {
  if (n < 2) throw std::invalid_argument("build_spec: need N >= 2");
  if (!(kappa > 0.0 && kappa <= 1.0)) {
    throw std::invalid_argument("build_spec: kappa must lie in (0, 1]");
  }
  if (gammas.empty()) throw std::invalid_argument("build_spec: need at least one gamma vector");
  for (const auto& g : gammas) {
    if (g.size() != n) throw std::invalid_argument("build_spec: gamma vector length != N");
  }

  for (std::size_t k = 0; k < gammas.size(); ++k) {
    for (int i = 0; i < n; ++i) {
      if (!(gammas[k][i] >= 1.0)) {
        std::ostringstream os;
        os << "gamma bound violated: gamma^(" << k + 1 << ")_" << i + 1 << " = " << gammas[k][i]
           << " < 1";
        throw ViolatedGammaBound(os.str());
      }
    }
  }

  CompensatedSum sq;
  for (const auto& g : gammas) {
    for (int i = 0; i < n; ++i) sq.add(g[i] * g[i]);
  }
  const double flatness = sq.value() / n;
  if (flatness > flatness_bound) {
    std::ostringstream os;
    os << "flatness violated: (1/N) sum gamma^2 = " << flatness << " > " << flatness_bound;
    throw ViolatedFlatness(os.str(), flatness, flatness_bound);
  }

  EnsembleSpec spec;
  spec.n = n;
  spec.kappa = kappa;
  spec.q = std::pow(static_cast<double>(n), kappa);
  spec.flatness_bound = flatness_bound;
  spec.gammas = std::move(gammas);

  // max_{i,j} s_ij = max_i (1/N) sum_k gamma_i^2: by Cauchy-Schwarz the inner
  // product of two factor rows is maximized on the diagonal.
  int argmax = 0;
  double best = 0.0;
  for (int i = 0; i < n; ++i) {
    double row = 0.0;
    for (const auto& g : spec.gammas) row += g[i] * g[i];
    if (row > best) {
      best = row;
      argmax = i;
    }
  }
  const double max_qs = spec.q * best / n;
  if (max_qs > 1.0 + 1e-9) {  // tolerate roundoff at the q*s = 1 boundary
    std::ostringstream os;
    os << "sparsity violated: q*s_ij = " << max_qs << " > 1 at (i,j) = (" << argmax + 1 << ","
       << argmax + 1 << ")";
    throw ViolatedSparsity(os.str(), argmax, argmax, max_qs);
  }
  spec.near_sparsity_bound = max_qs > 0.99;
  return spec;
}

inline EnsembleSpec build_power_law_spec(int n, double kappa, double mu,
                                         double flatness_bound = 100.0) {
  std::vector<Eigen::VectorXd> g;
  g.push_back(power_law_profile(n, mu));
  return build_spec(n, kappa, std::move(g), flatness_bound);
}

// ---------------------------------------------------------------------------
// Samplers
// ---------------------------------------------------------------------------

struct SampledMatrix {
  Eigen::MatrixXd entries;  // symmetric
  Model model;
  std::uint64_t seed;
};

namespace detail {
inline void check_dense_cap(int n) {
  if (n > kDenseCap) {
    throw Error("matrix dimension " + std::to_string(n) + " exceeds dense cap " +
                std::to_string(kDenseCap));
  }
}
}  // namespace detail

/// Sparse random-sign model: entry is +-1/sqrt(q) with probability q*s_ij/2
/// each, 0 otherwise.  Entries for i <= j are independent; j > i mirrored.
inline SampledMatrix sample_random_sign(const EnsembleSpec& spec, std::uint64_t seed) {
  detail::check_dense_cap(spec.n);
  const int n = spec.n;
  const double amp = 1.0 / std::sqrt(spec.q);
  Eigen::MatrixXd h(n, n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i <= j; ++i) {
      CounterRng rng(seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
      const double p = spec.q * spec.s(i, j);
      const double u = rng.next_unit();
      double v = 0.0;
      if (u < 0.5 * p) {
        v = amp;
      } else if (u < p) {
        v = -amp;
      }
      h(i, j) = v;
      h(j, i) = v;
    }
  }
  return {std::move(h), Model::RandomSign, seed};
}

/// Centered 0/1 adjacency model: with p = q*s_ij the entry is
/// (1-p)/sqrt(q) with probability p and -p/sqrt(q) otherwise.
inline SampledMatrix sample_centered(const EnsembleSpec& spec, std::uint64_t seed) {
  detail::check_dense_cap(spec.n);
  const int n = spec.n;
  const double inv_sq = 1.0 / std::sqrt(spec.q);
  Eigen::MatrixXd h(n, n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i <= j; ++i) {
      CounterRng rng(seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
      const double p = spec.q * spec.s(i, j);
      const double v = (rng.next_unit() < p) ? (1.0 - p) * inv_sq : -p * inv_sq;
      h(i, j) = v;
      h(j, i) = v;
    }
  }
  return {std::move(h), Model::CenteredZeroOne, seed};
}

/// Variance of a centered 0/1 entry: p(1-p)/q = s_ij (1 - q s_ij).
inline double centered_entry_variance(const EnsembleSpec& spec, int i, int j) {
  const double p = spec.q * spec.s(i, j);
  return p * (1.0 - p) / spec.q;
}

/// GOE reference ensemble: off-diagonal variance 1/N, diagonal variance 2/N,
/// so the spectrum is supported on approximately [-2, 2].
inline SampledMatrix sample_goe(int n, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("sample_goe: need N >= 2");
  detail::check_dense_cap(n);
  const double off = 1.0 / std::sqrt(static_cast<double>(n));
  const double diag = std::sqrt(2.0 / n);
  Eigen::MatrixXd h(n, n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i <= j; ++i) {
      CounterRng rng(seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
      const double v = rng.next_normal() * (i == j ? diag : off);
      h(i, j) = v;
      h(j, i) = v;
    }
  }
  return {std::move(h), Model::Goe, seed};
}

inline SampledMatrix sample_matrix(const EnsembleSpec& spec, Model model, std::uint64_t seed) {
  switch (model) {
    case Model::RandomSign: return sample_random_sign(spec, seed);
    case Model::CenteredZeroOne: return sample_centered(spec, seed);
    case Model::Goe: return sample_goe(spec.n, seed);
  }
  throw std::invalid_argument("sample_matrix: unknown model");
}

/// Vertex degrees of one 0/1 adjacency sample (P[a_ij = 1] = q*s_ij, the
/// pre-centering graph of the centered model).  Row sums; a self-loop a_ii
/// counts once.
inline Eigen::VectorXi adjacency_degrees(const EnsembleSpec& spec, std::uint64_t seed) {
  const int n = spec.n;
  Eigen::VectorXi deg = Eigen::VectorXi::Zero(n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i <= j; ++i) {
      CounterRng rng(seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
      const double p = spec.q * spec.s(i, j);
      if (rng.next_unit() < p) {
        deg[i] += 1;
        if (i != j) deg[j] += 1;
      }
    }
  }
  return deg;
}

}  // namespace clspec
