#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <vector>

#include "clspec/harness.hpp"

using namespace clspec;
using Catch::Approx;

namespace {

ExperimentPlan small_plan() {
  ExperimentPlan plan;
  plan.spec = build_power_law_spec(400, 0.4, 0.25);
  plan.model = Model::RandomSign;
  plan.domain.e_values = {-0.3, 0.0, 0.3};
  plan.domain.eta_values = {0.08, 0.2, 0.5};
  plan.samples = 12;
  plan.base_seed = 42;
  plan.pair_budget = 20000;
  plan.bulk_scan_points = 25;
  plan.bulk_probe_eta = 0.01;
  return plan;
}

}  // namespace

TEST_CASE("plan validation: eta floor and bulk containment") {
  auto plan = small_plan();
  const auto bulk = validate_plan(plan, {1e-11, 200000});
  REQUIRE(bulk.first < -0.3);
  REQUIRE(bulk.second > 0.3);

  auto low_eta = plan;
  low_eta.domain.eta_values = {1e-4};  // below N^(delta-1) = 400^-0.9
  REQUIRE_THROWS_AS(validate_plan(low_eta), std::invalid_argument);

  auto outside = plan;
  outside.domain.e_values = {7.0};  // far outside the spectrum
  REQUIRE_THROWS_AS(validate_plan(outside, {1e-11, 200000}), BulkValidationFailed);
}

TEST_CASE("degenerate plan: one sample, one grid point, one record") {
  ExperimentPlan plan;
  plan.spec = build_spec(128, 0.5, {constant_profile(128)});
  plan.domain.e_values = {0.0};
  plan.domain.eta_values = {0.3};
  plan.samples = 1;
  plan.base_seed = 9;
  const auto report = run_local_law(plan, {1e-11, 400000});
  REQUIRE(report.records.size() == 1);
  REQUIRE(report.per_z.size() == 1);
  REQUIRE(report.failures == 0);
  REQUIRE(report.valid);
  const auto& agg = report.per_z[0];
  REQUIRE(agg.lambda_phi_q50 <= agg.lambda_phi_q95);
  REQUIRE(agg.lambda_phi_q95 <= agg.lambda_phi_max);
}

TEST_CASE("local-law report is deterministic and thread-count independent") {
  auto plan = small_plan();
  plan.samples = 6;
  const auto a = run_local_law(plan, {1e-11, 400000});
  plan.threads = 4;
  const auto b = run_local_law(plan, {1e-11, 400000});
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    REQUIRE(a.records[i].record.lambda == b.records[i].record.lambda);
    REQUIRE(a.records[i].record.sample_seed == b.records[i].record.sample_seed);
    REQUIRE(a.records[i].m_dev == b.records[i].m_dev);
  }
}

TEST_CASE("local-law sweep on a small power-law ensemble") {
  const auto plan = small_plan();
  const auto report = run_local_law(plan, {1e-11, 400000});
  REQUIRE(report.per_z.size() == 9);
  REQUIRE(static_cast<int>(report.records.size()) == 9 * plan.samples);
  for (const auto& agg : report.per_z) {
    REQUIRE(agg.lambda_phi_q95 <= 10.0);
    REQUIRE(agg.mdev_phi_q95 <= 10.0);
    REQUIRE(agg.lambda_phi_q50 <= agg.lambda_phi_q95);
    REQUIRE(agg.lambda_phi_q95 <= agg.lambda_phi_max);
  }
  // per-sample records ordered by (z, seed) and complete
  for (int zi = 0; zi < 9; ++zi) {
    for (int s = 0; s < plan.samples; ++s) {
      const auto& rec = report.records[static_cast<std::size_t>(zi) * plan.samples + s].record;
      REQUIRE(rec.sample_seed == hash_combine(plan.base_seed, static_cast<std::uint64_t>(s)));
    }
  }
}

TEST_CASE("gap ratio statistics on intervals") {
  Spectrum sp;
  sp.eigenvalues.resize(4);
  sp.eigenvalues << 0.0, 1.0, 2.0, 4.0;
  const auto r = gap_ratio_statistics(sp, -1.0, 5.0);
  REQUIRE(r.size() == 2);
  REQUIRE(r[0] == Approx(1.0));
  REQUIRE(r[1] == Approx(0.5));
  REQUIRE_THROWS_AS(gap_ratio_statistics(sp, 0.5, 1.5), TooFewEigenvalues);
}

TEST_CASE("universality: GOE against GOE is null, Poisson is far") {
  ExperimentPlan a;
  a.spec = build_spec(300, 0.5, {constant_profile(300)});
  a.model = Model::Goe;
  a.samples = 20;
  a.base_seed = 100;
  ExperimentPlan b = a;
  b.base_seed = 5000;  // disjoint seeds
  const auto rep = run_universality(a, b);
  REQUIRE(rep.ratios_a.size() > 1500);
  REQUIRE(rep.ks <= 0.06);

  const auto poisson = poisson_control_ratios(300, 20, 777);
  const double d = ks_distance(poisson, rep.ratios_b);
  REQUIRE(d >= 0.1);
}

TEST_CASE("degree tail fit recovers beta = 1 + 1/mu") {
  const auto spec = build_power_law_spec(1500, 0.4, 0.25);
  DegreeTailOptions opts;
  opts.bootstraps = 100;
  const auto rep = degree_tail_fit(spec, 6, 31, opts);
  REQUIRE(rep.degrees.size() == 6u * 1500u);
  REQUIRE(rep.fit.beta_hat == Approx(5.0).margin(0.8));
  REQUIRE(rep.fit.ci_lo < rep.fit.ci_hi);
  REQUIRE(rep.fit.heavy_tail);

  // homogeneous degrees: the fit is flagged as having no power-law tail
  const auto flat = build_spec(1500, 0.4, {constant_profile(1500)});
  const auto degenerate = degree_tail_fit(flat, 2, 7, opts);
  REQUIRE_FALSE(degenerate.fit.heavy_tail);
}

TEST_CASE("degree tail fit at mu = 0.4 targets beta = 3.5") {
  const auto spec = build_power_law_spec(2000, 0.2, 0.4);
  DegreeTailOptions opts;
  opts.bootstraps = 50;
  const auto rep = degree_tail_fit(spec, 8, 11, opts);
  REQUIRE(rep.fit.beta_hat >= 3.0);
  REQUIRE(rep.fit.beta_hat <= 4.0);
  REQUIRE(rep.fit.heavy_tail);
}
