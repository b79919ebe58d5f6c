#pragma once

#include <CLI11.hpp>
#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clspec/config.hpp"
#include "clspec/harness.hpp"
#include "clspec/io.hpp"
#include "clspec/qve.hpp"
#include "clspec/version.hpp"

namespace clspec::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitThresholdFailed = 2;

struct GlobalFlags {
  std::string config_path;
  std::string out_dir;      // overrides config "out"
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

namespace detail {

inline RunConfig load_config(const GlobalFlags& flags) {
  json cfg = json::parse(read_file(flags.config_path), nullptr, false);
  if (cfg.is_discarded()) {
    throw SchemaViolation("config is not valid JSON", {"$: not valid JSON"});
  }
  apply_env_overrides(cfg);
  RunConfig rc = parse_config_json(cfg);
  if (!flags.out_dir.empty()) rc.out = flags.out_dir;
  if (flags.seed) rc.base_seed = *flags.seed;
  if (flags.threads) rc.threads = *flags.threads;
  return rc;
}

inline void write_manifest(const RunConfig& rc, const std::string& subcommand) {
  const json resolved = rc.to_json();
  json manifest;
  manifest["tool"] = "clspec";
  manifest["version"] = CLSPEC_VERSION;
  manifest["subcommand"] = subcommand;
  manifest["config_hash"] = content_hash(resolved.dump());
  manifest["base_seed"] = rc.base_seed;
  manifest["config"] = resolved;
  write_atomic(fs::path(rc.out) / "manifest.json", manifest.dump(2) + "\n");
}

inline void write_report(const RunConfig& rc, json report) {
  write_atomic(fs::path(rc.out) / "report.json", report.dump(2) + "\n");
}

struct Check {
  std::string name;
  bool pass;
  double value;
  double limit;
};

inline json checks_to_json(const std::vector<Check>& checks, bool& all_pass) {
  json out = json::object();
  all_pass = true;
  for (const auto& c : checks) {
    out[c.name] = {{"pass", c.pass}, {"value", c.value}, {"limit", c.limit}};
    all_pass &= c.pass;
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// solve: SCE on a z grid
// ---------------------------------------------------------------------------

inline EnsembleSpec spec_with_warning(const RunConfig& rc) {
  EnsembleSpec spec = rc.make_spec();
  if (spec.near_sparsity_bound) {
    std::cerr << "warning: max q*s_ij is within 1% of the sparsity bound 1\n";
  }
  return spec;
}

inline int run_solve(const RunConfig& rc) {
  const EnsembleSpec spec = spec_with_warning(rc);
  const auto zs = rc.make_z_grid();
  const auto sols = solve_grid(spec, zs, rc.solver);

  std::vector<std::string> cols{"e", "eta"};
  cols.insert(cols.end(), {"re_m", "im_m"});
  for (int k = 1; k <= spec.rank(); ++k) {
    cols.push_back("re_u" + std::to_string(k));
    cols.push_back("im_u" + std::to_string(k));
  }
  cols.insert(cols.end(), {"residual", "spectral_radius"});
  CsvWriter csv(cols);
  double max_residual = 0.0, max_radius = 0.0;
  for (const auto& sol : sols) {
    const auto cert = stability_certificate(spec, sol);
    auto row = csv.row();
    row.add(sol.z.real()).add(sol.z.imag()).add(sol.m.real()).add(sol.m.imag());
    for (int k = 0; k < spec.rank(); ++k) row.add(sol.u[k].real()).add(sol.u[k].imag());
    row.add(sol.residual).add(cert.spectral_radius);
    max_residual = std::max(max_residual, sol.residual);
    max_radius = std::max(max_radius, cert.spectral_radius);
  }
  write_atomic(fs::path(rc.out) / "records.csv", csv.str());

  std::vector<detail::Check> checks{
      {"residual_within_tol", max_residual <= rc.solver.tol, max_residual, rc.solver.tol},
      {"spectral_radius", max_radius <= rc.thresholds.spectral_radius, max_radius,
       rc.thresholds.spectral_radius}};
  bool pass = false;
  json report;
  report["subcommand"] = "solve";
  report["points"] = sols.size();
  report["checks"] = detail::checks_to_json(checks, pass);
  report["status"] = pass ? "pass" : "fail";
  detail::write_report(rc, std::move(report));
  detail::write_manifest(rc, "solve");
  return pass ? kExitOk : kExitThresholdFailed;
}

// ---------------------------------------------------------------------------
// qve: kernel equation on a z grid
// ---------------------------------------------------------------------------

/// Dense symmetric matrix from a CSV table (one row per line).
inline Eigen::MatrixXd read_matrix_csv(const std::string& path) {
  const std::string text = read_file(path);
  std::vector<std::vector<double>> rows;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    rows.emplace_back();
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) rows.back().push_back(std::stod(cell));
  }
  const int n = static_cast<int>(rows.size());
  Eigen::MatrixXd h(n, n);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(rows[i].size()) != n) throw IoError("matrix CSV is not square");
    for (int j = 0; j < n; ++j) h(i, j) = rows[i][j];
  }
  return h;
}

inline KernelGrid make_kernel(const RunConfig& rc) {
  if (rc.qve.kernel == "low_rank") {
    return low_rank_kernel(rc.make_spec().gammas, rc.qve.cells);
  }
  if (rc.qve.kernel == "flat") {
    return flat_kernel(rc.qve.cells, rc.qve.flat_value);
  }
  // csv: square table of cell values
  return explicit_kernel(read_matrix_csv(rc.qve.csv_path));
}

inline int run_qve(const RunConfig& rc) {
  const KernelGrid kernel = make_kernel(rc);
  if (kernel.min_cell() <= 0.0) {
    std::cerr << "warning: kernel has zero cells; stability theory does not cover it\n";
  }
  const auto zs = rc.make_z_grid();
  const auto sols = solve_qve_grid(kernel, zs, rc.solver);

  CsvWriter csv({"e", "eta", "cell", "x_mid", "re_g", "im_g"});
  double max_residual = 0.0;
  json m0 = json::array();
  for (const auto& sol : sols) {
    for (int a = 0; a < kernel.n; ++a) {
      csv.row()
          .add(sol.z.real())
          .add(sol.z.imag())
          .add(a)
          .add((a + 0.5) / kernel.n)
          .add(sol.g[a].real())
          .add(sol.g[a].imag());
    }
    m0.push_back({{"e", sol.z.real()},
                  {"eta", sol.z.imag()},
                  {"re_m0", sol.m0.real()},
                  {"im_m0", sol.m0.imag()},
                  {"residual", sol.residual},
                  {"iterations", sol.iterations}});
    max_residual = std::max(max_residual, sol.residual);
  }
  write_atomic(fs::path(rc.out) / "records.csv", csv.str());

  std::vector<detail::Check> checks{
      {"residual_within_tol", max_residual <= rc.solver.tol, max_residual, rc.solver.tol}};
  bool pass = false;
  json report;
  report["subcommand"] = "qve";
  report["cells"] = kernel.n;
  report["m0"] = std::move(m0);
  report["checks"] = detail::checks_to_json(checks, pass);
  report["status"] = pass ? "pass" : "fail";
  detail::write_report(rc, std::move(report));
  detail::write_manifest(rc, "qve");
  return pass ? kExitOk : kExitThresholdFailed;
}

// ---------------------------------------------------------------------------
// sample: one matrix to CSV
// ---------------------------------------------------------------------------

inline int run_sample(const RunConfig& rc) {
  const EnsembleSpec spec = spec_with_warning(rc);
  const auto sample = sample_matrix(spec, rc.model, rc.base_seed);
  std::string body;
  body.reserve(static_cast<std::size_t>(spec.n) * spec.n * 8);
  for (int i = 0; i < spec.n; ++i) {
    for (int j = 0; j < spec.n; ++j) {
      if (j) body += ',';
      body += format_full(sample.entries(i, j));
    }
    body += '\n';
  }
  write_atomic(fs::path(rc.out) / "matrix.csv", body);
  json report;
  report["subcommand"] = "sample";
  report["model"] = model_name(rc.model);
  report["n"] = spec.n;
  report["seed"] = rc.base_seed;
  report["status"] = "pass";
  detail::write_report(rc, std::move(report));
  detail::write_manifest(rc, "sample");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// stats: local-law records for one sample across the z grid
// ---------------------------------------------------------------------------

inline void append_local_law_row(CsvWriter& csv, const LocalLawRecord& rec, double m_dev) {
  csv.row()
      .add(rec.z.real())
      .add(rec.z.imag())
      .add(rec.sample_seed)
      .add(rec.lambda_d)
      .add(rec.lambda_o)
      .add(rec.lambda)
      .add(rec.phi)
      .add(rec.lambda / rec.phi)
      .add(rec.max_schur_residual)
      .add(m_dev)
      .add(rec.pair_budget)
      .add(static_cast<int>(rec.exhaustive_pairs));
}

inline const std::vector<std::string>& local_law_columns() {
  static const std::vector<std::string> cols{"e",   "eta",    "seed",          "lambda_d",
                                             "lambda_o", "lambda", "phi",      "lambda_over_phi",
                                             "schur_residual", "m_dev", "pair_budget",
                                             "exhaustive_pairs"};
  return cols;
}

inline int run_stats(const RunConfig& rc, const std::string& matrix_path = {}) {
  const EnsembleSpec spec = spec_with_warning(rc);
  const auto zs = rc.make_z_grid();
  const auto sols = solve_grid(spec, zs, rc.solver);
  const Spectrum sp =
      matrix_path.empty()
          ? eigen_decompose(sample_matrix(spec, rc.model, rc.base_seed), true)
          : eigen_decompose(read_matrix_csv(matrix_path), true, rc.base_seed);

  CsvWriter csv(local_law_columns());
  for (std::size_t i = 0; i < zs.size(); ++i) {
    const auto rec = local_law_record(sp, spec, sols[i], zs[i], rc.pair_budget);
    const double m_dev = std::abs(empirical_stieltjes(sp, zs[i]) - sols[i].m);
    append_local_law_row(csv, rec, m_dev);
  }
  write_atomic(fs::path(rc.out) / "records.csv", csv.str());
  json report;
  report["subcommand"] = "stats";
  report["n"] = spec.n;
  report["points"] = zs.size();
  report["status"] = "pass";
  detail::write_report(rc, std::move(report));
  detail::write_manifest(rc, "stats");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// local-law: Monte Carlo sweep
// ---------------------------------------------------------------------------

inline ExperimentPlan make_plan(const RunConfig& rc, const EnsembleSpec& spec) {
  if (!rc.grid) throw std::invalid_argument("local-law needs a grid section in the config");
  ExperimentPlan plan;
  plan.spec = spec;
  plan.model = rc.model;
  for (int i = 0; i < rc.grid->e_count; ++i) {
    plan.domain.e_values.push_back(
        rc.grid->e_count == 1
            ? rc.grid->e_min
            : rc.grid->e_min + (rc.grid->e_max - rc.grid->e_min) * i / (rc.grid->e_count - 1));
  }
  plan.domain.eta_values = rc.grid->eta;
  plan.samples = rc.samples;
  plan.base_seed = rc.base_seed;
  plan.pair_budget = rc.pair_budget;
  plan.delta = rc.delta;
  plan.bulk_threshold = rc.bulk_threshold;
  plan.bulk_probe_eta = rc.bulk_probe_eta;
  plan.bulk_scan_points = rc.bulk_scan_points;
  plan.threads = rc.threads;
  return plan;
}

inline int run_local_law_cmd(const RunConfig& rc) {
  const EnsembleSpec spec = spec_with_warning(rc);
  const ExperimentPlan plan = make_plan(rc, spec);
  const LocalLawReport rep = run_local_law(plan, rc.solver);

  CsvWriter csv(local_law_columns());
  for (const auto& s : rep.records) append_local_law_row(csv, s.record, s.m_dev);
  write_atomic(fs::path(rc.out) / "records.csv", csv.str());

  double worst_q95 = 0.0, worst_mdev = 0.0;
  json per_z = json::array();
  for (const auto& agg : rep.per_z) {
    worst_q95 = std::max(worst_q95, agg.lambda_phi_q95);
    worst_mdev = std::max(worst_mdev, agg.mdev_phi_q95);
    per_z.push_back({{"e", agg.z.real()},
                     {"eta", agg.z.imag()},
                     {"phi", agg.phi},
                     {"lambda_phi_q50", agg.lambda_phi_q50},
                     {"lambda_phi_q95", agg.lambda_phi_q95},
                     {"lambda_phi_max", agg.lambda_phi_max},
                     {"mdev_phi_q95", agg.mdev_phi_q95}});
  }
  const bool monotone = lambda_phi_medians_monotone(rep);

  std::vector<detail::Check> checks{
      {"lambda_phi_q95", worst_q95 <= rc.thresholds.lambda_phi_q95, worst_q95,
       rc.thresholds.lambda_phi_q95},
      {"mdev_phi_q95", worst_mdev <= rc.thresholds.mdev_phi_q95, worst_mdev,
       rc.thresholds.mdev_phi_q95},
      {"median_monotone_in_eta", monotone, monotone ? 1.0 : 0.0, 1.0},
      {"spectral_radius", rep.max_spectral_radius <= rc.thresholds.spectral_radius,
       rep.max_spectral_radius, rc.thresholds.spectral_radius},
      {"failure_rate", rep.valid, static_cast<double>(rep.failures), 0.01 * rep.samples}};
  bool pass = false;
  json report;
  report["subcommand"] = "local-law";
  report["records"] = "records.csv";
  report["model"] = model_name(rc.model);
  report["n"] = spec.n;
  report["samples"] = rep.samples;
  report["failures"] = rep.failures;
  report["bulk"] = {rep.bulk.first, rep.bulk.second};
  report["per_z"] = std::move(per_z);
  report["seconds"] = rep.seconds;
  report["checks"] = detail::checks_to_json(checks, pass);
  report["status"] = pass ? "pass" : "fail";
  detail::write_report(rc, std::move(report));
  detail::write_manifest(rc, "local-law");
  return pass ? kExitOk : kExitThresholdFailed;
}

// ---------------------------------------------------------------------------
// universality: gap-ratio comparison against sampled GOE
// ---------------------------------------------------------------------------

inline int run_universality_cmd(const RunConfig& rc) {
  const EnsembleSpec spec = spec_with_warning(rc);
  ExperimentPlan plan;
  plan.spec = spec;
  plan.model = rc.model;
  plan.samples = rc.samples;
  plan.base_seed = rc.base_seed;
  plan.threads = rc.threads;

  ExperimentPlan goe = plan;
  goe.model = Model::Goe;
  goe.samples = rc.universality.reference_samples;
  goe.base_seed = hash_combine(rc.base_seed, 0x60e);  // disjoint reference stream

  const auto rep = run_universality(plan, goe, rc.universality.bulk_fraction);

  CsvWriter csv({"source", "index", "ratio"});
  for (std::size_t i = 0; i < rep.ratios_a.size(); ++i) {
    csv.row().add(std::string("ensemble")).add(static_cast<long>(i)).add(rep.ratios_a[i]);
  }
  for (std::size_t i = 0; i < rep.ratios_b.size(); ++i) {
    csv.row().add(std::string("goe")).add(static_cast<long>(i)).add(rep.ratios_b[i]);
  }
  write_atomic(fs::path(rc.out) / "records.csv", csv.str());

  std::vector<detail::Check> checks{{"ks", rep.ks <= rc.thresholds.ks, rep.ks, rc.thresholds.ks}};
  json report;
  report["subcommand"] = "universality";
  report["records"] = "records.csv";
  report["model"] = model_name(rc.model);
  report["n"] = spec.n;
  report["pooled_ratios"] = {{"ensemble", rep.ratios_a.size()}, {"goe", rep.ratios_b.size()}};
  report["ks"] = rep.ks;
  if (rc.universality.poisson_control) {
    const auto control = poisson_control_ratios(
        spec.n, rc.samples, hash_combine(rc.base_seed, 0x9015), rc.universality.bulk_fraction);
    const double dc = ks_distance(control, rep.ratios_b);
    report["poisson_control_ks"] = dc;
    checks.push_back({"poisson_control_ks", dc >= rc.thresholds.ks_control, dc,
                      rc.thresholds.ks_control});
  }
  bool pass = false;
  report["seconds"] = rep.seconds;
  report["checks"] = detail::checks_to_json(checks, pass);
  report["status"] = pass ? "pass" : "fail";
  detail::write_report(rc, std::move(report));
  detail::write_manifest(rc, "universality");
  return pass ? kExitOk : kExitThresholdFailed;
}

// ---------------------------------------------------------------------------
// degrees: adjacency degree tail fit
// ---------------------------------------------------------------------------

inline int run_degrees_cmd(const RunConfig& rc) {
  const EnsembleSpec spec = spec_with_warning(rc);
  DegreeTailOptions opts;
  opts.cutoff_quantile = rc.degrees.cutoff_quantile;
  opts.bootstraps = rc.degrees.bootstraps;
  opts.threads = rc.threads;
  const auto rep = degree_tail_fit(spec, rc.samples, rc.base_seed, opts);

  CsvWriter csv({"sample", "vertex", "degree"});
  for (std::size_t i = 0; i < rep.degrees.size(); ++i) {
    csv.row()
        .add(static_cast<long>(i / static_cast<std::size_t>(spec.n)))
        .add(static_cast<long>(i % static_cast<std::size_t>(spec.n)))
        .add(rep.degrees[i]);
  }
  write_atomic(fs::path(rc.out) / "records.csv", csv.str());

  std::vector<detail::Check> checks;
  if (rc.thresholds.beta_max > 0.0) {
    const bool in_range = rep.fit.beta_hat >= rc.thresholds.beta_min &&
                          rep.fit.beta_hat <= rc.thresholds.beta_max;
    checks.push_back({"beta_min", rep.fit.beta_hat >= rc.thresholds.beta_min, rep.fit.beta_hat,
                      rc.thresholds.beta_min});
    checks.push_back({"beta_max", in_range, rep.fit.beta_hat, rc.thresholds.beta_max});
  }
  checks.push_back({"heavy_tail", rep.fit.heavy_tail, rep.fit.heavy_tail ? 1.0 : 0.0, 1.0});

  bool pass = false;
  json report;
  report["subcommand"] = "degrees";
  report["records"] = "records.csv";
  report["n"] = spec.n;
  report["samples"] = rc.samples;
  report["beta_hat"] = rep.fit.beta_hat;
  report["ci"] = {rep.fit.ci_lo, rep.fit.ci_hi};
  report["cutoff"] = rep.fit.cutoff;
  report["tail_count"] = rep.fit.tail_count;
  report["heavy_tail"] = rep.fit.heavy_tail;
  report["seconds"] = rep.seconds;
  report["checks"] = detail::checks_to_json(checks, pass);
  report["status"] = pass ? "pass" : "fail";
  detail::write_report(rc, std::move(report));
  detail::write_manifest(rc, "degrees");
  return pass ? kExitOk : kExitThresholdFailed;
}

// ---------------------------------------------------------------------------
// rerun: replay a manifest
// ---------------------------------------------------------------------------

inline int dispatch(const std::string& subcommand, const RunConfig& rc,
                    const std::string& matrix_path = {});

inline int run_rerun(const std::string& manifest_path, const GlobalFlags& flags) {
  json manifest = json::parse(read_file(manifest_path), nullptr, false);
  if (manifest.is_discarded() || !manifest.contains("subcommand") || !manifest.contains("config")) {
    throw IoError("not a clspec manifest: " + manifest_path);
  }
  json cfg = manifest.at("config");
  apply_env_overrides(cfg);
  RunConfig rc = parse_config_json(cfg);
  if (!flags.out_dir.empty()) rc.out = flags.out_dir;
  if (flags.seed) rc.base_seed = *flags.seed;
  if (flags.threads) rc.threads = *flags.threads;
  return dispatch(manifest.at("subcommand").get<std::string>(), rc);
}

inline int dispatch(const std::string& subcommand, const RunConfig& rc,
                    const std::string& matrix_path) {
  if (subcommand == "solve") return run_solve(rc);
  if (subcommand == "qve") return run_qve(rc);
  if (subcommand == "sample") return run_sample(rc);
  if (subcommand == "stats") return run_stats(rc, matrix_path);
  if (subcommand == "local-law") return run_local_law_cmd(rc);
  if (subcommand == "universality") return run_universality_cmd(rc);
  if (subcommand == "degrees") return run_degrees_cmd(rc);
  throw std::invalid_argument("unknown subcommand " + subcommand);
}

inline int run(int argc, const char* const* argv) {
  CLI::App app{"spectra of sparse random matrices with low-rank variance profiles"};
  app.set_version_flag("--version", CLSPEC_VERSION);
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags flags;
  app.add_option("--config", flags.config_path, "JSON config file");
  app.add_option("--out", flags.out_dir, "output directory (overrides config)");
  std::uint64_t seed_arg = 0;
  auto* seed_opt = app.add_option("--seed", seed_arg, "base seed (overrides config)");
  int threads_arg = 0;
  auto* threads_opt = app.add_option("--threads", threads_arg, "worker threads (overrides config)");

  std::string manifest_path;
  std::string matrix_path;
  std::vector<std::string> names{"solve", "qve", "sample", "stats", "local-law", "universality",
                                 "degrees"};
  for (const auto& name : names) {
    auto* sub = app.add_subcommand(name);
    if (name == "stats") {
      sub->add_option("--matrix", matrix_path, "read the matrix from a CSV file instead of sampling");
    }
  }
  auto* rerun = app.add_subcommand("rerun", "replay a recorded manifest");
  rerun->add_option("--manifest", manifest_path, "manifest.json from a previous run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (seed_opt->count()) flags.seed = seed_arg;
  if (threads_opt->count()) flags.threads = threads_arg;

  try {
    const std::string sub = app.get_subcommands().front()->get_name();
    if (sub == "rerun") return run_rerun(manifest_path, flags);
    if (flags.config_path.empty()) {
      std::cerr << "error: --config is required\n";
      return kExitError;
    }
    return dispatch(sub, detail::load_config(flags), matrix_path);
  } catch (const SchemaViolation& e) {
    std::cerr << "config error:\n";
    for (const auto& v : e.violations) std::cerr << "  " << v << "\n";
    return kExitError;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
}

}  // namespace clspec::cli
