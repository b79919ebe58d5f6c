#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace clspec {

inline constexpr std::uint64_t kGolden64 = 0x9e3779b97f4a7c15ull;

/// SplitMix64 finalizer (bijective avalanche on 64 bits).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Deterministic seed derivation: hash_combine(base, k) is the stream key for
/// work unit k, independent of the order work units are processed in.
constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) noexcept {
  return mix64(h + kGolden64 + v);
}

/// Counter-based generator keyed by (seed, i, j).  Each matrix entry gets its
/// own stream, so a sampled matrix does not depend on iteration order and
/// entries can be drawn concurrently.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t i, std::uint64_t j) noexcept
      : state_(hash_combine(hash_combine(seed, i), j)) {}

  explicit CounterRng(std::uint64_t seed) noexcept : state_(mix64(seed + kGolden64)) {}

  std::uint64_t next_u64() noexcept {
    state_ += kGolden64;
    return mix64(state_);
  }

  /// Uniform on the open interval (0,1); never returns an exact 0 or 1.
  double next_unit() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller (two uniforms per draw).
  double next_normal() noexcept {
    const double u1 = next_unit();
    const double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
};

}  // namespace clspec
