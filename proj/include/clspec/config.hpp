#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "clspec/ensemble.hpp"
#include "clspec/io.hpp"
#include "clspec/sce.hpp"

namespace clspec {

// ---------------------------------------------------------------------------
// Resolved run configuration (defaults filled, every field validated)
// ---------------------------------------------------------------------------

struct ProfileConfig {
  std::string type;  // constant | power_law | two_block | explicit
  int n = 0;
  int rank = 1;          // constant
  double value = 1.0;    // constant
  double mu = 0.25;      // power_law
  std::vector<double> values;       // two_block
  std::vector<double> proportions;  // two_block
  std::vector<std::vector<double>> gammas;  // explicit
};

struct GridConfig {
  double e_min = 0.0;
  double e_max = 0.0;
  int e_count = 1;
  std::vector<double> eta;
};

struct ThresholdConfig {
  double lambda_phi_q95 = 10.0;
  double mdev_phi_q95 = 10.0;
  double schur_phi_q95 = 10.0;
  double spectral_radius = 1.0 + 1e-8;
  double ks = 0.02;
  double ks_control = 0.1;
  double beta_min = 0.0;   // 0 disables the check
  double beta_max = 0.0;
};

struct QveConfig {
  std::string kernel = "low_rank";  // low_rank | flat | csv
  int cells = 1024;
  double flat_value = 1.0;
  std::string csv_path;
};

struct UniversalityConfig {
  int reference_samples = 50;
  double bulk_fraction = 1.0 / 3.0;
  bool poisson_control = false;
};

struct DegreesConfig {
  double cutoff_quantile = 0.8;
  int bootstraps = 200;
};

struct RunConfig {
  ProfileConfig profile;
  double kappa = 0.5;
  double flatness_bound = 100.0;
  Model model = Model::RandomSign;
  SolveOptions solver;
  std::optional<GridConfig> grid;
  int samples = 1;
  std::uint64_t base_seed = 1;
  long pair_budget = 100000;
  double delta = 0.1;
  double bulk_threshold = 0.05;
  double bulk_probe_eta = 1e-3;
  int bulk_scan_points = 65;
  ThresholdConfig thresholds;
  QveConfig qve;
  UniversalityConfig universality;
  DegreesConfig degrees;
  int threads = 1;
  std::string out = "out";

  json to_json() const;
  EnsembleSpec make_spec() const;
  std::vector<cplx> make_z_grid() const;  // E-major, eta descending
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace detail {

class SchemaChecker {
 public:
  std::vector<std::string> violations;

  void fail(const std::string& path, const std::string& msg) {
    violations.push_back(path + ": " + msg);
  }

  void check_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
    for (const auto& [key, value] : obj.items()) {
      (void)value;
      if (!allowed.count(key)) fail(path + key, "unknown key");
    }
  }

  bool has(const json& obj, const char* key) const { return obj.contains(key); }

  double number(const json& obj, const std::string& path, const char* key, double fallback,
                double lo, double hi, bool lo_open = false, bool hi_open = false) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number()) {
      fail(path + key, "expected a number");
      return fallback;
    }
    const double x = v.get<double>();
    const bool lo_ok = lo_open ? x > lo : x >= lo;
    const bool hi_ok = hi_open ? x < hi : x <= hi;
    if (!lo_ok || !hi_ok) {
      fail(path + key, "value " + format_full(x) + " outside " + (lo_open ? "(" : "[") +
                           format_full(lo) + ", " + format_full(hi) + (hi_open ? ")" : "]"));
      return fallback;
    }
    return x;
  }

  long integer(const json& obj, const std::string& path, const char* key, long fallback, long lo,
               long hi) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_integer() && !v.is_number_unsigned()) {
      fail(path + key, "expected an integer");
      return fallback;
    }
    const long x = v.get<long>();
    if (x < lo || x > hi) {
      fail(path + key, "value " + std::to_string(x) + " outside [" + std::to_string(lo) + ", " +
                           std::to_string(hi) + "]");
      return fallback;
    }
    return x;
  }

  std::string text(const json& obj, const std::string& path, const char* key,
                   const std::string& fallback, const std::set<std::string>& allowed = {}) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_string()) {
      fail(path + key, "expected a string");
      return fallback;
    }
    const std::string s = v.get<std::string>();
    if (!allowed.empty() && !allowed.count(s)) {
      std::string opts;
      for (const auto& a : allowed) opts += (opts.empty() ? "" : "|") + a;
      fail(path + key, "got \"" + s + "\", expected one of " + opts);
      return fallback;
    }
    return s;
  }

  bool flag(const json& obj, const std::string& path, const char* key, bool fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_boolean()) {
      fail(path + key, "expected a boolean");
      return fallback;
    }
    return v.get<bool>();
  }

  std::vector<double> number_list(const json& obj, const std::string& path, const char* key,
                                  double lo, bool lo_open) {
    std::vector<double> out;
    if (!obj.contains(key)) return out;
    const json& v = obj.at(key);
    if (!v.is_array() || v.empty()) {
      fail(path + key, "expected a nonempty array of numbers");
      return out;
    }
    for (const auto& e : v) {
      if (!e.is_number()) {
        fail(path + key, "expected numbers only");
        return {};
      }
      const double x = e.get<double>();
      if (lo_open ? x <= lo : x < lo) {
        fail(path + key, "entry " + format_full(x) + " below the allowed minimum");
        return {};
      }
      out.push_back(x);
    }
    return out;
  }
};

}  // namespace detail

/// Environment overrides: CLSPEC_<KEY> (top-level key upper-cased) replaces
/// the corresponding config entry.  Values are parsed as JSON when possible,
/// otherwise taken as strings.
inline void apply_env_overrides(json& cfg) {
  static const char* keys[] = {"profile",     "kappa",        "flatness_bound", "model",
                               "solver",      "grid",         "samples",        "base_seed",
                               "pair_budget", "delta",        "bulk",           "thresholds",
                               "qve",         "universality", "degrees",        "threads",
                               "out"};
  for (const char* key : keys) {
    std::string name = "CLSPEC_";
    for (const char* p = key; *p; ++p) name += static_cast<char>(std::toupper(*p));
    if (const char* value = std::getenv(name.c_str())) {
      json parsed = json::parse(value, nullptr, false);
      cfg[key] = parsed.is_discarded() ? json(std::string(value)) : parsed;
    }
  }
}

/// Parse and validate a config document.  Collects every violation (path and
/// message) before reporting, rather than stopping at the first.
inline RunConfig parse_config_json(const json& cfg) {
  detail::SchemaChecker c;
  RunConfig rc;

  if (!cfg.is_object()) {
    throw SchemaViolation("config: expected a JSON object", {"$: expected a JSON object"});
  }
  c.check_keys(cfg, "", {"profile", "kappa", "flatness_bound", "model", "solver", "grid",
                         "samples", "base_seed", "pair_budget", "delta", "bulk", "thresholds",
                         "qve", "universality", "degrees", "threads", "out"});

  // profile
  if (!cfg.contains("profile") || !cfg.at("profile").is_object()) {
    c.fail("profile", "required object");
  } else {
    const json& p = cfg.at("profile");
    c.check_keys(p, "profile.",
                 {"type", "n", "rank", "value", "mu", "values", "proportions", "gammas"});
    rc.profile.type = c.text(p, "profile.", "type", "",
                             {"constant", "power_law", "two_block", "explicit"});
    if (rc.profile.type.empty()) c.fail("profile.type", "required");
    if (rc.profile.type == "explicit") {
      if (!p.contains("gammas") || !p.at("gammas").is_array() || p.at("gammas").empty()) {
        c.fail("profile.gammas", "required nonempty array of arrays");
      } else {
        for (const auto& row : p.at("gammas")) {
          std::vector<double> g;
          if (!row.is_array() || row.empty()) {
            c.fail("profile.gammas", "each factor must be a nonempty array");
            break;
          }
          for (const auto& e : row) {
            if (!e.is_number()) {
              c.fail("profile.gammas", "numbers only");
              break;
            }
            g.push_back(e.get<double>());
          }
          rc.profile.gammas.push_back(std::move(g));
        }
        if (!rc.profile.gammas.empty()) rc.profile.n = static_cast<int>(rc.profile.gammas[0].size());
        for (const auto& g : rc.profile.gammas) {
          if (static_cast<int>(g.size()) != rc.profile.n) {
            c.fail("profile.gammas", "factors must share one length");
          }
        }
      }
    } else {
      rc.profile.n = static_cast<int>(c.integer(p, "profile.", "n", 0, 2, kDenseCap));
      if (!p.contains("n")) c.fail("profile.n", "required");
    }
    rc.profile.rank = static_cast<int>(c.integer(p, "profile.", "rank", 1, 1, 16));
    rc.profile.value = c.number(p, "profile.", "value", 1.0, 1.0, 1e6);
    if (rc.profile.type == "power_law") {
      rc.profile.mu = c.number(p, "profile.", "mu", 0.25, 0.0, 0.5, true, true);
      if (!p.contains("mu")) c.fail("profile.mu", "required for power_law (real in (0, 1/2))");
    }
    if (rc.profile.type == "two_block") {
      rc.profile.values = c.number_list(p, "profile.", "values", 1.0, false);
      rc.profile.proportions = c.number_list(p, "profile.", "proportions", 0.0, true);
      if (rc.profile.values.size() != rc.profile.proportions.size() || rc.profile.values.empty()) {
        c.fail("profile.values", "values/proportions must be nonempty and equal length");
      }
    }
  }

  rc.kappa = c.number(cfg, "", "kappa", 0.5, 0.0, 1.0, true, false);
  if (!cfg.contains("kappa")) c.fail("kappa", "required (real in (0,1])");
  rc.flatness_bound = c.number(cfg, "", "flatness_bound", 100.0, 0.0, 1e9, true);

  const std::string model =
      c.text(cfg, "", "model", "random_sign", {"random_sign", "centered01", "goe"});
  rc.model = model == "goe" ? Model::Goe
                            : (model == "centered01" ? Model::CenteredZeroOne : Model::RandomSign);

  if (cfg.contains("solver")) {
    const json& s = cfg.at("solver");
    if (!s.is_object()) {
      c.fail("solver", "expected an object");
    } else {
      c.check_keys(s, "solver.", {"tol", "max_iter", "damping_floor"});
      rc.solver.tol = c.number(s, "solver.", "tol", 1e-12, 0.0, 1.0, true, true);
      rc.solver.max_iter = static_cast<int>(c.integer(s, "solver.", "max_iter", 10000, 1, 100000000));
      rc.solver.damping_floor = c.number(s, "solver.", "damping_floor", 1.0 / 64.0, 0.0, 1.0, true);
    }
  }

  if (cfg.contains("grid")) {
    const json& g = cfg.at("grid");
    if (!g.is_object()) {
      c.fail("grid", "expected an object");
    } else {
      c.check_keys(g, "grid.",
                   {"e_min", "e_max", "e_count", "eta", "eta_min", "eta_max", "eta_count",
                    "eta_spacing"});
      GridConfig grid;
      grid.e_min = c.number(g, "grid.", "e_min", 0.0, -1e6, 1e6);
      grid.e_max = c.number(g, "grid.", "e_max", grid.e_min, -1e6, 1e6);
      grid.e_count = static_cast<int>(c.integer(g, "grid.", "e_count", 1, 1, 100000));
      if (grid.e_max < grid.e_min) c.fail("grid.e_max", "must be >= e_min");
      const bool has_list = g.contains("eta");
      const bool has_range = g.contains("eta_min") || g.contains("eta_max") ||
                             g.contains("eta_count") || g.contains("eta_spacing");
      if (has_list && has_range) c.fail("grid.eta", "give either eta or eta_min/eta_max/eta_count");
      if (has_list) {
        grid.eta = c.number_list(g, "grid.", "eta", 0.0, true);
      } else if (has_range) {
        const double lo = c.number(g, "grid.", "eta_min", 1e-3, 0.0, 100.0, true);
        const double hi = c.number(g, "grid.", "eta_max", 10.0, 0.0, 100.0, true);
        const int count = static_cast<int>(c.integer(g, "grid.", "eta_count", 20, 1, 100000));
        const std::string spacing =
            c.text(g, "grid.", "eta_spacing", "log", {"log", "linear"});
        if (hi < lo) {
          c.fail("grid.eta_max", "must be >= eta_min");
        } else {
          for (int i = 0; i < count; ++i) {
            const double t = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
            grid.eta.push_back(spacing == "log" ? lo * std::pow(hi / lo, t)
                                                : lo + (hi - lo) * t);
          }
        }
      } else {
        c.fail("grid.eta", "required: eta list or eta_min/eta_max/eta_count");
      }
      rc.grid = std::move(grid);
    }
  }

  rc.samples = static_cast<int>(c.integer(cfg, "", "samples", 1, 1, 1000000));
  if (cfg.contains("base_seed")) {
    const json& v = cfg.at("base_seed");
    if (!v.is_number_unsigned() && !v.is_number_integer()) {
      c.fail("base_seed", "expected an unsigned integer");
    } else if (v.is_number_integer() && v.get<long long>() < 0) {
      c.fail("base_seed", "must be nonnegative");
    } else {
      rc.base_seed = v.get<std::uint64_t>();
    }
  }
  rc.pair_budget = c.integer(cfg, "", "pair_budget", 100000, 1, 1000000000);
  rc.delta = c.number(cfg, "", "delta", 0.1, 0.0, 1.0, true, true);

  if (cfg.contains("bulk")) {
    const json& b = cfg.at("bulk");
    if (!b.is_object()) {
      c.fail("bulk", "expected an object");
    } else {
      c.check_keys(b, "bulk.", {"threshold", "probe_eta", "scan_points"});
      rc.bulk_threshold = c.number(b, "bulk.", "threshold", 0.05, 0.0, 10.0, true);
      rc.bulk_probe_eta = c.number(b, "bulk.", "probe_eta", 1e-3, 0.0, 1.0, true);
      rc.bulk_scan_points = static_cast<int>(c.integer(b, "bulk.", "scan_points", 65, 2, 10000));
    }
  }

  if (cfg.contains("thresholds")) {
    const json& t = cfg.at("thresholds");
    if (!t.is_object()) {
      c.fail("thresholds", "expected an object");
    } else {
      c.check_keys(t, "thresholds.",
                   {"lambda_phi_q95", "mdev_phi_q95", "schur_phi_q95", "spectral_radius", "ks",
                    "ks_control", "beta_min", "beta_max"});
      rc.thresholds.lambda_phi_q95 = c.number(t, "thresholds.", "lambda_phi_q95", 10.0, 0.0, 1e9, true);
      rc.thresholds.mdev_phi_q95 = c.number(t, "thresholds.", "mdev_phi_q95", 10.0, 0.0, 1e9, true);
      rc.thresholds.schur_phi_q95 = c.number(t, "thresholds.", "schur_phi_q95", 10.0, 0.0, 1e9, true);
      rc.thresholds.spectral_radius =
          c.number(t, "thresholds.", "spectral_radius", 1.0 + 1e-8, 0.0, 2.0, true);
      rc.thresholds.ks = c.number(t, "thresholds.", "ks", 0.02, 0.0, 1.0, true);
      rc.thresholds.ks_control = c.number(t, "thresholds.", "ks_control", 0.1, 0.0, 1.0, true);
      rc.thresholds.beta_min = c.number(t, "thresholds.", "beta_min", 0.0, 0.0, 100.0);
      rc.thresholds.beta_max = c.number(t, "thresholds.", "beta_max", 0.0, 0.0, 100.0);
    }
  }

  if (cfg.contains("qve")) {
    const json& q = cfg.at("qve");
    if (!q.is_object()) {
      c.fail("qve", "expected an object");
    } else {
      c.check_keys(q, "qve.", {"kernel", "cells", "flat_value", "csv_path"});
      rc.qve.kernel = c.text(q, "qve.", "kernel", "low_rank", {"low_rank", "flat", "csv"});
      rc.qve.cells = static_cast<int>(c.integer(q, "qve.", "cells", 1024, 2, 8192));
      if ((rc.qve.cells & (rc.qve.cells - 1)) != 0) c.fail("qve.cells", "must be a power of two");
      rc.qve.flat_value = c.number(q, "qve.", "flat_value", 1.0, 0.0, 1e6, true);
      rc.qve.csv_path = c.text(q, "qve.", "csv_path", "");
      if (rc.qve.kernel == "csv" && rc.qve.csv_path.empty()) {
        c.fail("qve.csv_path", "required for the csv kernel");
      }
    }
  }

  if (cfg.contains("universality")) {
    const json& u = cfg.at("universality");
    if (!u.is_object()) {
      c.fail("universality", "expected an object");
    } else {
      c.check_keys(u, "universality.", {"reference_samples", "bulk_fraction", "poisson_control"});
      rc.universality.reference_samples =
          static_cast<int>(c.integer(u, "universality.", "reference_samples", 50, 1, 100000));
      rc.universality.bulk_fraction =
          c.number(u, "universality.", "bulk_fraction", 1.0 / 3.0, 0.0, 1.0, true, false);
      rc.universality.poisson_control = c.flag(u, "universality.", "poisson_control", false);
    }
  }

  if (cfg.contains("degrees")) {
    const json& d = cfg.at("degrees");
    if (!d.is_object()) {
      c.fail("degrees", "expected an object");
    } else {
      c.check_keys(d, "degrees.", {"cutoff_quantile", "bootstraps"});
      rc.degrees.cutoff_quantile =
          c.number(d, "degrees.", "cutoff_quantile", 0.8, 0.0, 1.0, true, true);
      rc.degrees.bootstraps = static_cast<int>(c.integer(d, "degrees.", "bootstraps", 200, 0, 100000));
    }
  }

  rc.threads = static_cast<int>(c.integer(cfg, "", "threads", 1, 1, 256));
  rc.out = c.text(cfg, "", "out", "out");

  if (!c.violations.empty()) {
    std::string msg = "config has " + std::to_string(c.violations.size()) + " violation(s)";
    for (const auto& v : c.violations) msg += "\n  " + v;
    throw SchemaViolation(msg, std::move(c.violations));
  }
  return rc;
}

inline RunConfig parse_config(const std::string& text, bool with_env = true) {
  json cfg = json::parse(text, nullptr, false);
  if (cfg.is_discarded()) {
    throw SchemaViolation("config is not valid JSON", {"$: not valid JSON"});
  }
  if (with_env) apply_env_overrides(cfg);
  return parse_config_json(cfg);
}

// ---------------------------------------------------------------------------
// RunConfig helpers
// ---------------------------------------------------------------------------

inline json RunConfig::to_json() const {
  json p;
  p["type"] = profile.type;
  if (profile.type == "explicit") {
    p["gammas"] = profile.gammas;
  } else {
    p["n"] = profile.n;
  }
  if (profile.type == "constant") {
    p["rank"] = profile.rank;
    p["value"] = profile.value;
  }
  if (profile.type == "power_law") p["mu"] = profile.mu;
  if (profile.type == "two_block") {
    p["values"] = profile.values;
    p["proportions"] = profile.proportions;
  }
  json j;
  j["profile"] = std::move(p);
  j["kappa"] = kappa;
  j["flatness_bound"] = flatness_bound;
  j["model"] = model_name(model);
  j["solver"] = {{"tol", solver.tol},
                 {"max_iter", solver.max_iter},
                 {"damping_floor", solver.damping_floor}};
  if (grid) {
    j["grid"] = {{"e_min", grid->e_min},
                 {"e_max", grid->e_max},
                 {"e_count", grid->e_count},
                 {"eta", grid->eta}};
  }
  j["samples"] = samples;
  j["base_seed"] = base_seed;
  j["pair_budget"] = pair_budget;
  j["delta"] = delta;
  j["bulk"] = {{"threshold", bulk_threshold},
               {"probe_eta", bulk_probe_eta},
               {"scan_points", bulk_scan_points}};
  j["thresholds"] = {{"lambda_phi_q95", thresholds.lambda_phi_q95},
                     {"mdev_phi_q95", thresholds.mdev_phi_q95},
                     {"schur_phi_q95", thresholds.schur_phi_q95},
                     {"spectral_radius", thresholds.spectral_radius},
                     {"ks", thresholds.ks},
                     {"ks_control", thresholds.ks_control},
                     {"beta_min", thresholds.beta_min},
                     {"beta_max", thresholds.beta_max}};
  j["qve"] = {{"kernel", qve.kernel},
              {"cells", qve.cells},
              {"flat_value", qve.flat_value},
              {"csv_path", qve.csv_path}};
  j["universality"] = {{"reference_samples", universality.reference_samples},
                       {"bulk_fraction", universality.bulk_fraction},
                       {"poisson_control", universality.poisson_control}};
  j["degrees"] = {{"cutoff_quantile", degrees.cutoff_quantile},
                  {"bootstraps", degrees.bootstraps}};
  // out and threads are per-invocation concerns; they do not change results,
  // so the recorded experiment identity omits them.
  return j;
}

inline EnsembleSpec RunConfig::make_spec() const {
  std::vector<Eigen::VectorXd> gs;
  if (profile.type == "constant") {
    for (int k = 0; k < profile.rank; ++k) gs.push_back(constant_profile(profile.n, profile.value));
  } else if (profile.type == "power_law") {
    gs.push_back(power_law_profile(profile.n, profile.mu));
  } else if (profile.type == "two_block") {
    gs.push_back(block_profile(profile.n, profile.values, profile.proportions));
  } else if (profile.type == "explicit") {
    for (const auto& g : profile.gammas) {
      gs.push_back(Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<long>(g.size())));
    }
  } else {
    throw std::invalid_argument("unknown profile type " + profile.type);
  }
  return build_spec(profile.n, kappa, std::move(gs), flatness_bound);
}

inline std::vector<cplx> RunConfig::make_z_grid() const {
  if (!grid) throw std::invalid_argument("this subcommand needs a grid section in the config");
  std::vector<double> etas = grid->eta;
  std::sort(etas.rbegin(), etas.rend());
  std::vector<cplx> zs;
  for (int i = 0; i < grid->e_count; ++i) {
    const double e = grid->e_count == 1
                         ? grid->e_min
                         : grid->e_min + (grid->e_max - grid->e_min) * i / (grid->e_count - 1);
    for (double eta : etas) zs.emplace_back(e, eta);
  }
  return zs;
}

}  // namespace clspec
