#include "probode/experiments.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "probode/bayes.hpp"
#include "probode/calibration.hpp"
#include "probode/convergence.hpp"
#include "probode/fem1d.hpp"
#include "probode/io.hpp"
#include "probode/problems.hpp"
#include "probode/stats.hpp"
#include "probode/version.hpp"

namespace probode::experiments {

namespace {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config access with field-level diagnostics.
// ---------------------------------------------------------------------------

[[noreturn]] void fail(const std::string& ctx, const std::string& message) {
  throw ConfigError(ctx + ": " + message);
}

const json& require_field(const json& j, const char* key, const std::string& ctx) {
  if (!j.is_object()) fail(ctx, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) fail(ctx, std::string("missing required field '") + key + "'");
  return *it;
}

double require_number(const json& j, const char* key, const std::string& ctx) {
  const json& v = require_field(j, key, ctx);
  if (!v.is_number()) fail(ctx, std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

double require_positive(const json& j, const char* key, const std::string& ctx) {
  const double v = require_number(j, key, ctx);
  if (!(v > 0.0)) fail(ctx, std::string("field '") + key + "' must be positive");
  return v;
}

double require_nonnegative(const json& j, const char* key, const std::string& ctx) {
  const double v = require_number(j, key, ctx);
  if (!(v >= 0.0)) fail(ctx, std::string("field '") + key + "' must be nonnegative");
  return v;
}

long require_int(const json& j, const char* key, const std::string& ctx, long min_value) {
  const json& v = require_field(j, key, ctx);
  if (!v.is_number_integer()) fail(ctx, std::string("field '") + key + "' must be an integer");
  const long n = v.get<long>();
  if (n < min_value) {
    fail(ctx, std::string("field '") + key + "' must be >= " + std::to_string(min_value));
  }
  return n;
}

std::uint64_t require_seed(const json& j, const std::string& ctx) {
  const json& v = require_field(j, "seed", ctx);
  if (!v.is_number_unsigned() && !v.is_number_integer()) {
    fail(ctx, "field 'seed' must be an integer");
  }
  if (v.is_number_integer() && v.get<long long>() < 0) {
    fail(ctx, "field 'seed' must be nonnegative");
  }
  return v.get<std::uint64_t>();
}

std::uint64_t optional_seed(const json& j, const char* key, std::uint64_t fallback) {
  if (!j.contains(key)) return fallback;
  return j[key].get<std::uint64_t>();
}

std::string require_string(const json& j, const char* key, const std::string& ctx) {
  const json& v = require_field(j, key, ctx);
  if (!v.is_string()) fail(ctx, std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

std::vector<double> require_number_array(const json& j, const char* key, const std::string& ctx,
                                         std::size_t min_size) {
  const json& v = require_field(j, key, ctx);
  if (!v.is_array()) fail(ctx, std::string("field '") + key + "' must be an array");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) fail(ctx, std::string("field '") + key + "' must contain numbers");
    out.push_back(e.get<double>());
  }
  if (out.size() < min_size) {
    fail(ctx, std::string("field '") + key + "' needs at least " + std::to_string(min_size) +
                  " entries");
  }
  return out;
}

void reject_unknown(const json& j, const std::string& ctx,
                    std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(ctx, "expected an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed) {
      if (item.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) fail(ctx, "unknown field '" + item.key() + "'");
  }
}

// ---------------------------------------------------------------------------
// Shared sub-schemas.
// ---------------------------------------------------------------------------

ode::ODEProblem parse_problem(const json& j, const std::string& ctx) {
  const std::string kind = require_string(j, "kind", ctx);
  if (kind == "linear") {
    reject_unknown(j, ctx, {"kind", "lambda", "u0", "T"});
    return problems::linear(require_number(j, "lambda", ctx), require_number(j, "u0", ctx),
                            require_positive(j, "T", ctx));
  }
  if (kind == "fitzhugh_nagumo") {
    reject_unknown(j, ctx, {"kind", "a", "b", "c", "v0", "r0", "T"});
    return problems::fitzhugh_nagumo(require_number(j, "a", ctx), require_number(j, "b", ctx),
                                     require_number(j, "c", ctx), require_number(j, "v0", ctx),
                                     require_number(j, "r0", ctx), require_positive(j, "T", ctx));
  }
  fail(ctx, "unknown problem kind '" + kind + "'");
}

ode::OneStepMethod parse_method(const json& j, const char* key, const std::string& ctx) {
  const std::string name = require_string(j, key, ctx);
  if (name == "euler") return ode::OneStepMethod::euler();
  if (name == "rk4") return ode::OneStepMethod::rk4();
  if (name == "integrated_ou") {
    const std::vector<double> lams = require_number_array(j, "ou_lambda", ctx, 1);
    Eigen::VectorXd lambda(lams.size());
    for (std::size_t i = 0; i < lams.size(); ++i) {
      if (!(lams[i] > 0.0)) fail(ctx, "field 'ou_lambda' must be positive");
      lambda[static_cast<int>(i)] = lams[i];
    }
    return ode::OneStepMethod::integrated_ou(lambda);
  }
  fail(ctx, std::string("field '") + key + "' must be euler, rk4 or integrated_ou");
}

std::vector<double> parse_sigma_grid(const json& j, const char* key, const std::string& ctx) {
  const json& v = require_field(j, key, ctx);
  if (v.is_array()) {
    std::vector<double> grid = require_number_array(j, key, ctx, 1);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (!(grid[i] > 0.0)) fail(ctx, "sigma grid entries must be positive");
      if (i > 0 && !(grid[i] > grid[i - 1])) fail(ctx, "sigma grid must be increasing");
    }
    return grid;
  }
  const std::string grid_ctx = ctx + "." + key;
  reject_unknown(v, grid_ctx, {"min", "max", "count"});
  const double lo = require_positive(v, "min", grid_ctx);
  const double hi = require_positive(v, "max", grid_ctx);
  const long count = require_int(v, "count", grid_ctx, 2);
  if (!(hi > lo)) fail(grid_ctx, "max must exceed min");
  std::vector<double> grid(count);
  for (long i = 0; i < count; ++i) {
    grid[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (count - 1));
  }
  return grid;
}

struct McmcSettings {
  int n_steps = 10000;
  int inner_draws = 10;
  bayes::AdaptConfig adapt;
};

McmcSettings parse_mcmc(const json& j, const std::string& ctx) {
  reject_unknown(j, ctx, {"n_steps", "inner_draws", "adapt_interval", "initial_scale"});
  McmcSettings s;
  s.n_steps = static_cast<int>(require_int(j, "n_steps", ctx, 1));
  if (j.contains("inner_draws")) {
    s.inner_draws = static_cast<int>(require_int(j, "inner_draws", ctx, 1));
  }
  if (j.contains("adapt_interval")) {
    s.adapt.interval = static_cast<int>(require_int(j, "adapt_interval", ctx, 1));
  }
  if (j.contains("initial_scale")) {
    s.adapt.initial_scale = require_positive(j, "initial_scale", ctx);
  }
  return s;
}

std::vector<bayes::ParamPrior> parse_priors(const json& j, const std::string& ctx) {
  if (!j.is_array() || j.empty()) fail(ctx, "priors must be a nonempty array");
  std::vector<bayes::ParamPrior> priors;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string pctx = ctx + "[" + std::to_string(i) + "]";
    const json& p = j[i];
    reject_unknown(p, pctx, {"type", "location", "scale"});
    bayes::ParamPrior prior;
    const std::string type = require_string(p, "type", pctx);
    if (type == "normal") {
      prior.kind = bayes::ParamPrior::Kind::kNormal;
    } else if (type == "log_normal") {
      prior.kind = bayes::ParamPrior::Kind::kLogNormal;
    } else {
      fail(pctx, "prior type must be normal or log_normal");
    }
    prior.location = require_number(p, "location", pctx);
    prior.scale = require_positive(p, "scale", pctx);
    priors.push_back(prior);
  }
  return priors;
}

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

json fit_to_json(const convergence::OrderFit& fit) {
  return json{{"slope", fit.slope}, {"intercept", fit.intercept}, {"r2", fit.r_squared}};
}

void write_fit_csv(const std::filesystem::path& path, const convergence::OrderFit& fit) {
  io::CsvWriter csv(path);
  const std::vector<std::string> header = {"h", "error", "stderr"};
  csv.write_header(header);
  for (std::size_t i = 0; i < fit.h_values.size(); ++i) {
    const double se = i < fit.errors_stderr.size() ? fit.errors_stderr[i] : 0.0;
    csv.write_row(fit.h_values[i], fit.errors[i], se);
  }
}

// ---------------------------------------------------------------------------
// Experiment runners. Every runner parses and validates its whole config
// before touching `out`; a null `out` requests validation only.
// ---------------------------------------------------------------------------

using Runner =
    std::function<std::vector<std::string>(const json&, const std::filesystem::path* out)>;

std::vector<std::string> run_strong_order(const json& cfg, const std::filesystem::path* out) {
  const std::string ctx = "strong-order";
  reject_unknown(cfg, ctx, {"experiment", "seed", "problem", "h_ladder", "replicates", "cases"});
  const std::uint64_t seed = require_seed(cfg, ctx);
  const ode::ODEProblem problem =
      parse_problem(require_field(cfg, "problem", ctx), ctx + ".problem");
  const std::vector<double> ladder = require_number_array(cfg, "h_ladder", ctx, 3);
  const int replicates = static_cast<int>(require_int(cfg, "replicates", ctx, 50));
  const json& cases_j = require_field(cfg, "cases", ctx);
  if (!cases_j.is_array() || cases_j.empty()) fail(ctx, "field 'cases' must be a nonempty array");

  struct Case {
    std::string name;
    ode::OneStepMethod method;
    perturbation::PerturbationSpec spec;
  };
  std::vector<Case> cases;
  for (std::size_t i = 0; i < cases_j.size(); ++i) {
    const std::string cctx = ctx + ".cases[" + std::to_string(i) + "]";
    const json& c = cases_j[i];
    reject_unknown(c, cctx, {"method", "ou_lambda", "p", "sigma"});
    Case parsed;
    parsed.name = require_string(c, "method", cctx);
    parsed.method = parse_method(c, "method", cctx);
    parsed.spec = {static_cast<int>(require_int(c, "p", cctx, 1)),
                   require_nonnegative(c, "sigma", cctx), problem.dim()};
    cases.push_back(std::move(parsed));
  }
  if (out == nullptr) return {};

  std::vector<std::string> files;
  json summary = json::array();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const Case& c = cases[i];
    const convergence::OrderFit fit =
        convergence::estimate_strong_order(problem, c.method, c.spec, ladder, replicates, seed + i);
    const std::string name = "strong_order_" + c.name + ".csv";
    write_fit_csv(*out / name, fit);
    files.push_back(name);
    summary.push_back(json{{"method", c.name},
                           {"p", c.spec.p},
                           {"sigma", c.spec.sigma},
                           {"slope", fit.slope},
                           {"intercept", fit.intercept},
                           {"r2", fit.r_squared}});
  }
  io::write_text_file(*out / "strong_order.json", json{{"cases", summary}}.dump(2) + "\n");
  files.push_back("strong_order.json");
  return files;
}

std::vector<std::string> run_weak_order_linear(const json& cfg, const std::filesystem::path* out) {
  const std::string ctx = "weak-order-linear";
  reject_unknown(cfg, ctx, {"experiment", "seed", "lambda", "u0", "T", "p", "sigma", "h_ladder"});
  require_seed(cfg, ctx);
  const double lambda = require_number(cfg, "lambda", ctx);
  const double u0 = require_number(cfg, "u0", ctx);
  const double T = require_positive(cfg, "T", ctx);
  const int p = static_cast<int>(require_int(cfg, "p", ctx, 1));
  const double sigma = require_nonnegative(cfg, "sigma", ctx);
  const std::vector<double> ladder = require_number_array(cfg, "h_ladder", ctx, 3);
  if (out == nullptr) return {};

  std::vector<std::string> files;
  json summary;
  const struct {
    convergence::WeakFunctional phi;
    const char* name;
  } functionals[] = {{convergence::WeakFunctional::kIdentity, "identity"},
                     {convergence::WeakFunctional::kSquare, "square"}};
  for (const auto& f : functionals) {
    std::vector<double> gap_mod(ladder.size()), gap_ode(ladder.size());
    for (std::size_t i = 0; i < ladder.size(); ++i) {
      const perturbation::PerturbationSpec spec{p, sigma, 1};
      const convergence::LinearWeakErrors e =
          convergence::weak_error_linear(lambda, u0, T, ladder[i], spec, f.phi);
      gap_mod[i] = std::abs(e.numerical - e.modified_sde);
      gap_ode[i] = std::abs(e.numerical - e.original_ode);
    }
    const std::string name = std::string("weak_order_") + f.name + ".csv";
    io::CsvWriter csv(*out / name);
    const std::vector<std::string> header = {"h", "error_vs_modified_sde",
                                             "error_vs_original_ode"};
    csv.write_header(header);
    for (std::size_t i = 0; i < ladder.size(); ++i) {
      csv.write_row(ladder[i], gap_mod[i], gap_ode[i]);
    }
    files.push_back(name);
    summary[f.name] =
        json{{"vs_modified_sde", fit_to_json(convergence::fit_loglog(ladder, gap_mod))},
             {"vs_original_ode", fit_to_json(convergence::fit_loglog(ladder, gap_ode))}};
  }
  io::write_text_file(*out / "weak_order.json", summary.dump(2) + "\n");
  files.push_back("weak_order.json");
  return files;
}

std::vector<std::string> run_fn_forward(const json& cfg, const std::filesystem::path* out) {
  const std::string ctx = "fn-forward";
  reject_unknown(cfg, ctx, {"experiment", "seed", "problem", "method", "p", "sigma", "h_values",
                            "draws", "reference_h"});
  const std::uint64_t seed = require_seed(cfg, ctx);
  const ode::ODEProblem problem =
      parse_problem(require_field(cfg, "problem", ctx), ctx + ".problem");
  const ode::OneStepMethod method = parse_method(cfg, "method", ctx);
  const int p = static_cast<int>(require_int(cfg, "p", ctx, 1));
  const double sigma = require_nonnegative(cfg, "sigma", ctx);
  const std::vector<double> h_values = require_number_array(cfg, "h_values", ctx, 1);
  const int draws = static_cast<int>(require_int(cfg, "draws", ctx, 1));
  const double reference_h = require_positive(cfg, "reference_h", ctx);
  if (out == nullptr) return {};

  std::vector<std::string> files;
  const ode::TrajectorySample ref =
      ode::solve_deterministic(problem, ode::OneStepMethod::rk4(), reference_h);
  ode::write_trajectory_csv(ref, *out / "reference.csv");
  files.push_back("reference.csv");

  const RngStream root(seed);
  const int n = problem.dim();
  for (std::size_t i = 0; i < h_values.size(); ++i) {
    const double h = h_values[i];
    const std::string name = "ensemble_h" + short_number(h) + ".csv";
    io::CsvWriter csv(*out / name);
    std::vector<std::string> header = {"draw", "t"};
    for (int d = 1; d <= n; ++d) header.push_back("u_" + std::to_string(d));
    csv.write_header(header);

    const perturbation::PerturbationSpec spec{p, sigma, n};
    const RngStream h_rng = root.child(i);
    for (int m = 0; m < draws; ++m) {
      const ode::TrajectorySample traj =
          ode::solve(problem, method, spec, h, h_rng.child(static_cast<std::uint64_t>(m)));
      for (std::size_t k = 0; k < traj.times.size(); ++k) {
        std::string row = std::to_string(m) + "," + io::format_double(traj.times[k]);
        for (int d = 0; d < n; ++d) row += "," + io::format_double(traj.states[k][d]);
        csv.write_row(row);
      }
    }
    files.push_back(name);
  }
  return files;
}

std::vector<std::string> run_fn_calibrate(const json& cfg, const std::filesystem::path* out) {
  const std::string ctx = "fn-calibrate";
  reject_unknown(cfg, ctx,
                 {"experiment", "seed", "problem", "method", "h", "p", "n_mc", "sigma_grid"});
  const std::uint64_t seed = require_seed(cfg, ctx);
  const ode::ODEProblem problem =
      parse_problem(require_field(cfg, "problem", ctx), ctx + ".problem");
  const ode::OneStepMethod method = parse_method(cfg, "method", ctx);
  const double h = require_positive(cfg, "h", ctx);
  const int p = static_cast<int>(require_int(cfg, "p", ctx, 1));
  const int n_mc = static_cast<int>(require_int(cfg, "n_mc", ctx, 2));
  const std::vector<double> grid = parse_sigma_grid(cfg, "sigma_grid", ctx);
  if (out == nullptr) return {};

  const calibration::ErrorIndicatorSeries indicator =
      calibration::error_indicator_step_halving(problem, method, h);
  const calibration::CalibrationResult result =
      calibration::calibrate(problem, method, h, p, indicator, n_mc, seed, grid);

  auto profile = result.profile;
  std::sort(profile.begin(), profile.end());
  io::CsvWriter csv(*out / "calibration_profile.csv");
  const std::vector<std::string> header = {"sigma", "log_pi"};
  csv.write_header(header);
  for (const auto& [sigma, log_pi] : profile) csv.write_row(sigma, log_pi);

  io::write_text_file(*out / "calibration.json",
                      json{{"sigma_star", result.sigma_star},
                           {"n_mc", result.mc_samples},
                           {"seed", result.seed}}
                              .dump(2) +
                          "\n");
  return {"calibration_profile.csv", "calibration.json"};
}

struct FnPosteriorParams {
  ode::ODEProblem truth;
  double v0 = 0.0, r0 = 0.0, T = 0.0;
  double h = 0.1;
  double gamma = 0.001;
  std::uint64_t data_seed = 0;
  double reference_h = 0.001;
  std::vector<double> obs_times;
  std::vector<bayes::ParamPrior> priors;
  McmcSettings mcmc;
  bayes::SolverChoice solver;
};

FnPosteriorParams parse_fn_posterior(const json& cfg, const std::string& ctx) {
  reject_unknown(
      cfg, ctx, {"experiment", "seed", "problem", "h", "observations", "priors", "mcmc", "solver"});
  FnPosteriorParams params;
  const json& pj = require_field(cfg, "problem", ctx);
  const std::string pctx = ctx + ".problem";
  if (require_string(pj, "kind", pctx) != "fitzhugh_nagumo") {
    fail(pctx, "posterior experiments use the fitzhugh_nagumo problem");
  }
  params.truth = parse_problem(pj, pctx);
  params.v0 = require_number(pj, "v0", pctx);
  params.r0 = require_number(pj, "r0", pctx);
  params.T = require_positive(pj, "T", pctx);
  params.h = require_positive(cfg, "h", ctx);

  const json& oj = require_field(cfg, "observations", ctx);
  const std::string octx = ctx + ".observations";
  reject_unknown(oj, octx,
                 {"times_start", "times_step", "times_count", "gamma", "data_seed", "reference_h"});
  const double start = require_positive(oj, "times_start", octx);
  const double step = require_positive(oj, "times_step", octx);
  const long count = require_int(oj, "times_count", octx, 1);
  params.gamma = require_positive(oj, "gamma", octx);
  params.data_seed = optional_seed(oj, "data_seed", 0);
  params.reference_h = require_positive(oj, "reference_h", octx);
  for (long j = 0; j < count; ++j) params.obs_times.push_back(start + step * j);
  if (params.obs_times.back() > params.T + 1e-12) fail(octx, "observation times exceed T");

  params.priors = parse_priors(require_field(cfg, "priors", ctx), ctx + ".priors");
  if (params.priors.size() != 3) fail(ctx, "posterior experiments infer exactly (a, b, c)");
  params.mcmc = parse_mcmc(require_field(cfg, "mcmc", ctx), ctx + ".mcmc");

  const json& sj = require_field(cfg, "solver", ctx);
  const std::string sctx = ctx + ".solver";
  const std::string type = require_string(sj, "type", sctx);
  if (type == "deterministic") {
    reject_unknown(sj, sctx, {"type"});
    params.solver.randomized = false;
    params.solver.inner_draws = 1;
  } else if (type == "randomized") {
    reject_unknown(sj, sctx, {"type", "sigma", "p", "inner_draws"});
    params.solver.randomized = true;
    params.solver.sigma = require_positive(sj, "sigma", sctx);
    params.solver.p = static_cast<int>(require_int(sj, "p", sctx, 1));
    params.solver.inner_draws = static_cast<int>(require_int(sj, "inner_draws", sctx, 1));
  } else {
    fail(sctx, "solver type must be deterministic or randomized");
  }
  return params;
}

std::vector<std::string> run_fn_posterior(const json& cfg, const std::filesystem::path* out,
                                          const std::string& ctx) {
  const FnPosteriorParams params = parse_fn_posterior(cfg, ctx);
  const std::uint64_t seed = require_seed(cfg, ctx);
  if (out == nullptr) return {};

  // Synthetic data: fine deterministic reference plus observation noise.
  const ode::TrajectorySample ref =
      ode::solve_deterministic(params.truth, ode::OneStepMethod::rk4(), params.reference_h);
  RngStream data_rng = RngStream(params.data_seed).child("fn-data");
  bayes::ObservationSet obs;
  obs.times = params.obs_times;
  obs.gamma_diag = Eigen::VectorXd::Constant(2, params.gamma);
  for (double tau : params.obs_times) {
    const long idx = std::lround(tau / params.reference_h);
    Eigen::VectorXd d = ref.states[idx];
    for (int i = 0; i < 2; ++i) d[i] += std::sqrt(params.gamma) * data_rng.gauss();
    obs.values.push_back(d);
  }

  io::CsvWriter data_csv(*out / "data.csv");
  const std::vector<std::string> header = {"tau", "d_1", "d_2"};
  data_csv.write_header(header);
  for (std::size_t j = 0; j < obs.times.size(); ++j) {
    data_csv.write_row(obs.times[j], obs.values[j][0], obs.values[j][1]);
  }

  bayes::PosteriorSpec spec;
  const double v0 = params.v0, r0 = params.r0, T = params.T;
  spec.model = [v0, r0, T](const Eigen::VectorXd& theta) {
    return problems::fitzhugh_nagumo(theta[0], theta[1], theta[2], v0, r0, T);
  };
  spec.method = ode::OneStepMethod::euler();
  spec.priors = params.priors;
  spec.solver = params.solver;
  spec.h = params.h;

  const bayes::ChainOutput chain =
      bayes::rwm_chain(spec, obs, params.mcmc.n_steps, params.mcmc.adapt, seed);
  bayes::write_chain_csv(chain, *out / "chain.csv");

  io::write_text_file(*out / "run.json",
                      json{{"seed", seed},
                           {"h", params.h},
                           {"sigma", params.solver.randomized ? params.solver.sigma : 0.0},
                           {"R", params.solver.inner_draws},
                           {"n_steps", params.mcmc.n_steps},
                           {"acceptance_rate", chain.acceptance_rate}}
                              .dump(2) +
                          "\n");
  return {"data.csv", "chain.csv", "run.json"};
}

std::vector<std::string> run_linear_conjugate(const json& cfg, const std::filesystem::path* out) {
  const std::string ctx = "linear-conjugate";
  reject_unknown(cfg, ctx, {"experiment", "seed", "lambda", "h", "obs_index", "gamma", "sigma",
                            "p", "prior", "u0_true", "data_seed", "mcmc"});
  const std::uint64_t seed = require_seed(cfg, ctx);
  const double lambda = require_positive(cfg, "lambda", ctx);
  const double h = require_positive(cfg, "h", ctx);
  const int k = static_cast<int>(require_int(cfg, "obs_index", ctx, 1));
  const double gamma = require_positive(cfg, "gamma", ctx);
  const double sigma = require_positive(cfg, "sigma", ctx);
  const int p = static_cast<int>(require_int(cfg, "p", ctx, 1));
  const json& prior_j = require_field(cfg, "prior", ctx);
  reject_unknown(prior_j, ctx + ".prior", {"mean", "sd"});
  const double m0 = require_number(prior_j, "mean", ctx + ".prior");
  const double zeta0 = require_positive(prior_j, "sd", ctx + ".prior");
  const double u0_true = require_number(cfg, "u0_true", ctx);
  const std::uint64_t data_seed = optional_seed(cfg, "data_seed", 0);
  const McmcSettings mcmc = parse_mcmc(require_field(cfg, "mcmc", ctx), ctx + ".mcmc");
  if (out == nullptr) return {};

  RngStream data_rng = RngStream(data_seed).child("conjugate-data");
  const double t_obs = k * h;
  const double d_k = std::exp(lambda * t_obs) * u0_true + gamma * data_rng.gauss();

  const bayes::ConjugatePosterior closed = bayes::linear_conjugate_posterior(
      lambda, h, k, gamma * gamma, sigma, p, m0, zeta0 * zeta0, d_k);

  bayes::ObservationSet obs;
  obs.times = {t_obs};
  obs.values = {Eigen::VectorXd::Constant(1, d_k)};
  obs.gamma_diag = Eigen::VectorXd::Constant(1, gamma * gamma);

  bayes::PosteriorSpec spec;
  const double T = t_obs;
  spec.model = [lambda, T](const Eigen::VectorXd& theta) {
    return problems::linear(lambda, theta[0], T);
  };
  spec.method = ode::OneStepMethod::euler();
  spec.priors = {bayes::ParamPrior{bayes::ParamPrior::Kind::kNormal, m0, zeta0}};
  spec.h = h;

  json summary;
  summary["closed_form"] = json{{"mean", closed.mean},
                                {"variance", closed.variance},
                                {"gamma_h2", closed.effective_variance}};
  std::vector<std::string> files;
  const struct {
    const char* name;
    bool randomized;
  } runs[] = {{"deterministic", false}, {"randomized", true}};
  for (const auto& r : runs) {
    spec.solver.randomized = r.randomized;
    spec.solver.sigma = r.randomized ? sigma : 0.0;
    spec.solver.p = p;
    spec.solver.inner_draws = r.randomized ? mcmc.inner_draws : 1;
    const bayes::ChainOutput chain = bayes::rwm_chain(spec, obs, mcmc.n_steps, mcmc.adapt, seed);
    const std::string name = std::string("chain_") + r.name + ".csv";
    bayes::write_chain_csv(chain, *out / name);
    files.push_back(name);
    const std::vector<double> draws = chain.retained(0);
    summary[r.name] = json{{"mean", stats::mean(draws)},
                           {"variance", stats::variance(draws)},
                           {"acceptance_rate", chain.acceptance_rate}};
  }
  io::write_text_file(*out / "conjugate.json", summary.dump(2) + "\n");
  files.push_back("conjugate.json");
  return files;
}

std::vector<std::string> run_fem_rates(const json& cfg, const std::filesystem::path* out) {
  const std::string ctx = "fem-rates";
  reject_unknown(cfg, ctx, {"experiment", "seed", "log_kappa", "p", "sigma_fem", "n_kl",
                            "element_ladder", "draws", "ref_elements", "modes"});
  const std::uint64_t seed = require_seed(cfg, ctx);
  const std::vector<double> log_kappa = require_number_array(cfg, "log_kappa", ctx, 9);
  if (log_kappa.size() != 9) fail(ctx, "field 'log_kappa' must have exactly nine entries");
  Eigen::VectorXd theta(9);
  for (int i = 0; i < 9; ++i) theta[i] = log_kappa[i];
  const fem1d::CoefficientField kappa(theta);

  fem1d::RandomBasisSpec spec;
  spec.p = static_cast<int>(require_int(cfg, "p", ctx, 1));
  spec.sigma_fem = require_positive(cfg, "sigma_fem", ctx);
  spec.n_kl = static_cast<int>(require_int(cfg, "n_kl", ctx, 1));
  const std::vector<double> ladder_d = require_number_array(cfg, "element_ladder", ctx, 3);
  std::vector<int> ladder;
  for (double m : ladder_d) ladder.push_back(static_cast<int>(m));
  const int draws = static_cast<int>(require_int(cfg, "draws", ctx, 2));
  const int ref_elements = static_cast<int>(require_int(cfg, "ref_elements", ctx, 10));
  const json& modes_j = require_field(cfg, "modes", ctx);
  if (!modes_j.is_array() || modes_j.empty()) fail(ctx, "field 'modes' must be a nonempty array");
  std::vector<std::string> modes;
  for (const auto& mode : modes_j) {
    if (!mode.is_string()) fail(ctx, "modes must be strings");
    const std::string name = mode.get<std::string>();
    if (name != "deterministic" && name != "randomized") {
      fail(ctx, "modes must be deterministic or randomized");
    }
    modes.push_back(name);
  }
  if (out == nullptr) return {};

  std::vector<std::string> files;
  json summary;
  for (const std::string& name : modes) {
    fem1d::RandomBasisSpec mode_spec = spec;
    if (name == "deterministic") mode_spec.sigma_fem = 0.0;
    const fem1d::FemRatePair rates =
        fem1d::estimate_fem_rates(kappa, mode_spec, ladder, draws, seed, ref_elements);
    const std::string energy_name = "fem_rates_" + name + "_energy.csv";
    const std::string l2_name = "fem_rates_" + name + "_l2.csv";
    write_fit_csv(*out / energy_name, rates.energy);
    write_fit_csv(*out / l2_name, rates.l2);
    files.push_back(energy_name);
    files.push_back(l2_name);
    summary[name] = json{{"energy", fit_to_json(rates.energy)}, {"l2", fit_to_json(rates.l2)}};
  }
  io::write_text_file(*out / "fem_rates.json", summary.dump(2) + "\n");
  files.push_back("fem_rates.json");
  return files;
}

std::vector<std::string> run_elliptic_inverse(const json& cfg, const std::filesystem::path* out) {
  const std::string ctx = "elliptic-inverse";
  reject_unknown(cfg, ctx, {"experiment", "seed", "theta_true", "obs_x", "noise_var", "data",
                            "grids", "solver", "calibrate", "mcmc"});
  const std::uint64_t seed = require_seed(cfg, ctx);
  const std::vector<double> theta_true_v = require_number_array(cfg, "theta_true", ctx, 9);
  if (theta_true_v.size() != 9) fail(ctx, "field 'theta_true' must have exactly nine entries");
  Eigen::VectorXd theta_true(9);
  for (int i = 0; i < 9; ++i) theta_true[i] = theta_true_v[i];
  const std::vector<double> obs_x = require_number_array(cfg, "obs_x", ctx, 1);
  const double noise_var = require_positive(cfg, "noise_var", ctx);

  const json& dj = require_field(cfg, "data", ctx);
  reject_unknown(dj, ctx + ".data", {"ref_elements", "data_seed"});
  const int data_ref = static_cast<int>(require_int(dj, "ref_elements", ctx + ".data", 10));
  const std::uint64_t data_seed = optional_seed(dj, "data_seed", 0);

  const std::vector<double> grids_d = require_number_array(cfg, "grids", ctx, 1);
  const json& sj = require_field(cfg, "solver", ctx);
  const std::string sctx = ctx + ".solver";
  const std::string solver_type = require_string(sj, "type", sctx);
  bool randomized = false;
  fem1d::RandomBasisSpec basis_spec;
  int inner_draws = 10;
  if (solver_type == "randomized") {
    reject_unknown(sj, sctx, {"type", "sigma_fem", "p", "n_kl", "inner_draws"});
    randomized = true;
    basis_spec.sigma_fem = require_positive(sj, "sigma_fem", sctx);
    basis_spec.p = static_cast<int>(require_int(sj, "p", sctx, 1));
    basis_spec.n_kl = static_cast<int>(require_int(sj, "n_kl", sctx, 1));
    inner_draws = static_cast<int>(require_int(sj, "inner_draws", sctx, 1));
  } else if (solver_type == "deterministic") {
    reject_unknown(sj, sctx, {"type"});
  } else {
    fail(sctx, "solver type must be deterministic or randomized");
  }

  int calib_n_mc = 0, calib_n_prior = 0;
  std::vector<double> calib_grid;
  std::vector<double> calib_points;
  const bool calibrating = cfg.contains("calibrate");
  if (calibrating) {
    if (!randomized) fail(ctx, "calibration requires the randomized solver");
    const json& cj = cfg["calibrate"];
    const std::string cctx = ctx + ".calibrate";
    reject_unknown(cj, cctx, {"n_mc", "n_prior_draws", "sigma_grid", "points"});
    calib_n_mc = static_cast<int>(require_int(cj, "n_mc", cctx, 2));
    calib_n_prior = static_cast<int>(require_int(cj, "n_prior_draws", cctx, 1));
    calib_grid = parse_sigma_grid(cj, "sigma_grid", cctx);
    // Interior nodal values of the aligned linear elements are superconvergent
    // for this problem family, so the scale comparison should be made at
    // off-node points where true interpolation-scale error lives.
    calib_points =
        cj.contains("points") ? require_number_array(cj, "points", cctx, 1) : obs_x;
  }
  const McmcSettings mcmc = parse_mcmc(require_field(cfg, "mcmc", ctx), ctx + ".mcmc");
  if (out == nullptr) return {};

  // Observations from a fine quadratic solve of the true coefficient field.
  const fem1d::CoefficientField kappa_true(theta_true);
  const fem1d::QuadraticSolution fine = fem1d::solve_quadratic(
      fem1d::Mesh1D::with_elements(data_ref), kappa_true, fem1d::source_4x(), 0.0, 2.0);
  RngStream data_rng = RngStream(data_seed).child("elliptic-data");
  std::vector<double> data(obs_x.size());
  for (std::size_t i = 0; i < obs_x.size(); ++i) {
    data[i] = fine(obs_x[i]) + std::sqrt(noise_var) * data_rng.gauss();
  }
  {
    io::CsvWriter csv(*out / "data.csv");
    const std::vector<std::string> header = {"x", "d"};
    csv.write_header(header);
    for (std::size_t i = 0; i < obs_x.size(); ++i) csv.write_row(obs_x[i], data[i]);
  }
  std::vector<std::string> files = {"data.csv"};

  const std::vector<bayes::ParamPrior> priors(
      9, bayes::ParamPrior{bayes::ParamPrior::Kind::kNormal, 0.0, 1.0});

  for (double grid_d : grids_d) {
    const int n_elem = static_cast<int>(grid_d);
    const fem1d::Mesh1D mesh = fem1d::Mesh1D::with_elements(n_elem);
    const std::string tag = std::to_string(n_elem);

    fem1d::RandomBasisSpec grid_spec = basis_spec;
    if (calibrating) {
      const calibration::CalibrationResult calib = fem1d::calibrate_fem_sigma(
          mesh, grid_spec, calib_points, calib_n_mc, calib_n_prior, seed + n_elem, calib_grid);
      grid_spec.sigma_fem = calib.sigma_star;
      const std::string calib_name = "calibration_m" + tag + ".json";
      io::write_text_file(*out / calib_name,
                          json{{"sigma_star", calib.sigma_star},
                               {"n_mc", calib.mc_samples},
                               {"seed", calib.seed}}
                                  .dump(2) +
                              "\n");
      files.push_back(calib_name);
    }

    auto loglik = [&, grid_spec](const Eigen::VectorXd& theta, RngStream& rng) {
      const fem1d::CoefficientField kappa(theta);
      const int R = randomized ? inner_draws : 1;
      std::vector<double> lls(R);
      for (int r = 0; r < R; ++r) {
        double ll = 0.0;
        const fem1d::Fem1DSolution sol = [&]() {
          if (randomized) {
            RngStream draw_rng = rng.child(static_cast<std::uint64_t>(r));
            return fem1d::solve_system(fem1d::assemble_randomized(mesh, kappa, grid_spec, draw_rng));
          }
          return fem1d::solve_system(fem1d::assemble_deterministic(mesh, kappa));
        }();
        for (std::size_t i = 0; i < obs_x.size(); ++i) {
          const double resid = data[i] - sol(obs_x[i]);
          ll += -0.5 * std::log(2.0 * std::numbers::pi * noise_var) -
                0.5 * resid * resid / noise_var;
        }
        lls[r] = ll;
      }
      return stats::log_mean_exp(lls);
    };

    const bayes::ChainOutput chain = bayes::rwm_chain_generic(
        loglik, priors, mcmc.n_steps, mcmc.adapt, seed + 1000 + n_elem, randomized);
    const std::string chain_name = "chain_m" + tag + ".csv";
    bayes::write_chain_csv(chain, *out / chain_name);
    files.push_back(chain_name);

    const std::string run_name = "run_m" + tag + ".json";
    io::write_text_file(*out / run_name,
                        json{{"seed", seed},
                             {"grid", n_elem},
                             {"sigma_fem", randomized ? grid_spec.sigma_fem : 0.0},
                             {"R", randomized ? inner_draws : 1},
                             {"n_steps", mcmc.n_steps},
                             {"acceptance_rate", chain.acceptance_rate}}
                                .dump(2) +
                            "\n");
    files.push_back(run_name);
  }
  return files;
}

const std::map<std::string, Runner>& runners() {
  static const std::map<std::string, Runner> registry = {
      {"strong-order", run_strong_order},
      {"weak-order-linear", run_weak_order_linear},
      {"fn-forward", run_fn_forward},
      {"fn-calibrate", run_fn_calibrate},
      {"fn-posterior-det",
       [](const json& cfg, const std::filesystem::path* out) {
         return run_fn_posterior(cfg, out, "fn-posterior-det");
       }},
      {"fn-posterior-rand",
       [](const json& cfg, const std::filesystem::path* out) {
         return run_fn_posterior(cfg, out, "fn-posterior-rand");
       }},
      {"linear-conjugate", run_linear_conjugate},
      {"fem-rates", run_fem_rates},
      {"elliptic-inverse", run_elliptic_inverse},
  };
  return registry;
}

json parse_config(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

const Runner& find_runner(const json& cfg) {
  const std::string kind = require_string(cfg, "experiment", "config");
  const auto it = runners().find(kind);
  if (it == runners().end()) throw ConfigError("config: unknown experiment '" + kind + "'");
  return it->second;
}

}  // namespace

void validate_config_text(const std::string& json_text) {
  const json cfg = parse_config(json_text);
  find_runner(cfg)(cfg, nullptr);
}

RunResult run_config_text(const std::string& json_text, const std::filesystem::path& out_dir,
                          std::optional<std::uint64_t> seed_override) {
  json cfg = parse_config(json_text);
  if (seed_override) cfg["seed"] = *seed_override;
  const Runner& runner = find_runner(cfg);

  std::filesystem::create_directories(out_dir);
  std::vector<std::string> outputs;
  try {
    outputs = runner(cfg, &out_dir);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    const std::string seed = cfg.contains("seed") ? cfg["seed"].dump() : "unset";
    throw NumericalError(std::string(e.what()) + " [seed=" + seed + "]");
  }

  json manifest;
  manifest["schema_version"] = 1;
  manifest["library_version"] = std::string(kVersion);
  manifest["experiment"] = cfg["experiment"];
  manifest["config"] = cfg;
  manifest["outputs"] = outputs;
  const std::filesystem::path manifest_path = out_dir / "manifest.json";
  io::write_text_file(manifest_path, manifest.dump(2) + "\n");

  return RunResult{manifest_path, outputs};
}

RunResult run_config_file(const std::filesystem::path& config_path,
                          const std::filesystem::path& out_dir,
                          std::optional<std::uint64_t> seed_override) {
  std::ifstream in(config_path);
  if (!in) throw ConfigError("cannot open config file: " + config_path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return run_config_text(buffer.str(), out_dir, seed_override);
}

}  // namespace probode::experiments
