#include "probode/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace probode::calibration {

ErrorIndicatorSeries error_indicator_step_halving(const ode::ODEProblem& problem,
                                                  const ode::OneStepMethod& method, double h) {
  problem.validate();
  if (!(h > 0.0)) throw std::invalid_argument("step length h must be positive");
  const double fine_ratio = problem.T / h;
  const double coarse_ratio = problem.T / (2.0 * h);
  if (std::abs(fine_ratio - std::round(fine_ratio)) > 1e-9 ||
      std::abs(coarse_ratio - std::round(coarse_ratio)) > 1e-9) {
    throw std::invalid_argument("step-halving indicator needs both h and 2h to divide T");
  }

  const ode::TrajectorySample fine = ode::solve_deterministic(problem, method, h);
  const ode::TrajectorySample coarse = ode::solve_deterministic(problem, method, 2.0 * h);

  ErrorIndicatorSeries series;
  series.times = fine.times;
  series.values.reserve(fine.times.size());
  for (std::size_t k = 0; k < fine.times.size(); ++k) {
    Eigen::VectorXd coarse_at_t;
    if (k % 2 == 0) {
      coarse_at_t = coarse.states[k / 2];
    } else {
      // Odd fine points sit halfway through a coarse step: apply the
      // deterministic flow-map approximation over the half step.
      coarse_at_t = ode::deterministic_step(method, problem.f, coarse.states[(k - 1) / 2], h);
    }
    series.values.push_back(fine.states[k] - coarse_at_t);
  }
  return series;
}

double bhattacharyya_gaussian(double mu1, double v1, double mu2, double v2) {
  if (!(v1 > 0.0) || !(v2 > 0.0)) {
    throw std::invalid_argument("Bhattacharyya distance requires positive variances");
  }
  const double dm = mu1 - mu2;
  return 0.25 * dm * dm / (v1 + v2) + 0.5 * std::log((v1 + v2) / (2.0 * std::sqrt(v1 * v2)));
}

double log_pi_sigma(double sigma, const ode::ODEProblem& problem, const ode::OneStepMethod& method,
                    double h, const perturbation::PerturbationSpec& spec_template,
                    const ErrorIndicatorSeries& indicator, int n_mc, std::uint64_t seed) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  if (n_mc < 2) throw std::invalid_argument("need at least two Monte-Carlo trajectories");

  const ode::TrajectorySample det = ode::solve_deterministic(problem, method, h);
  const std::size_t n_mesh = det.times.size();
  if (indicator.values.size() != n_mesh) {
    throw std::invalid_argument("indicator series does not match the solver mesh");
  }
  const int n = problem.dim();

  perturbation::PerturbationSpec spec = spec_template;
  spec.sigma = sigma;
  spec.dim = n;

  // Per-(step, dimension) running mean and squared deviation (Welford).
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(n_mesh, n);
  Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(n_mesh, n);
  const RngStream base = RngStream(seed).child("calibration");
  for (int m = 0; m < n_mc; ++m) {
    const ode::TrajectorySample traj =
        ode::solve(problem, method, spec, h, base.child(static_cast<std::uint64_t>(m)));
    const double count = static_cast<double>(m + 1);
    for (std::size_t k = 0; k < n_mesh; ++k) {
      for (int i = 0; i < n; ++i) {
        const double x = traj.states[k][i];
        const double delta = x - mean(k, i);
        mean(k, i) += delta / count;
        m2(k, i) += delta * (x - mean(k, i));
      }
    }
  }

  double log_pi = 0.0;
  for (std::size_t k = 1; k < n_mesh; ++k) {
    for (int i = 0; i < n; ++i) {
      const double var_hat = m2(k, i) / (n_mc - 1);
      const double center = det.states[k][i];
      const double eps = 1e-12 * (1.0 + std::abs(center));
      const double nu_var = std::max(indicator.values[k][i] * indicator.values[k][i], eps * eps);
      log_pi -= bhattacharyya_gaussian(mean(k, i), var_hat, center, nu_var);
    }
  }
  return log_pi;
}

CalibrationResult maximize_profile(const std::function<double(double)>& log_pi,
                                   const std::vector<double>& sigma_grid, int golden_rounds) {
  if (sigma_grid.empty()) throw std::invalid_argument("sigma grid must be nonempty");
  for (std::size_t i = 0; i < sigma_grid.size(); ++i) {
    if (!(sigma_grid[i] > 0.0)) throw std::invalid_argument("sigma grid must be positive");
    if (i > 0 && !(sigma_grid[i] > sigma_grid[i - 1])) {
      throw std::invalid_argument("sigma grid must be strictly increasing");
    }
  }

  CalibrationResult result;
  std::size_t best = 0;
  for (std::size_t i = 0; i < sigma_grid.size(); ++i) {
    const double v = log_pi(sigma_grid[i]);
    result.profile.emplace_back(sigma_grid[i], v);
    if (v > result.profile[best].second) best = i;
  }

  // Golden-section refinement inside the bracket around the best grid point.
  const std::size_t lo = best > 0 ? best - 1 : best;
  const std::size_t hi = best + 1 < sigma_grid.size() ? best + 1 : best;
  double a = sigma_grid[lo];
  double b = sigma_grid[hi];
  if (b > a && golden_rounds > 0) {
    constexpr double kGolden = 0.6180339887498949;
    double x1 = b - kGolden * (b - a);
    double x2 = a + kGolden * (b - a);
    double f1 = log_pi(x1);
    double f2 = log_pi(x2);
    result.profile.emplace_back(x1, f1);
    result.profile.emplace_back(x2, f2);
    for (int round = 0; round < golden_rounds; ++round) {
      if (f1 < f2) {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + kGolden * (b - a);
        f2 = log_pi(x2);
        result.profile.emplace_back(x2, f2);
      } else {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - kGolden * (b - a);
        f1 = log_pi(x1);
        result.profile.emplace_back(x1, f1);
      }
    }
  }

  const auto it = std::max_element(
      result.profile.begin(), result.profile.end(),
      [](const auto& l, const auto& r) { return l.second < r.second; });
  result.sigma_star = it->first;
  return result;
}

CalibrationResult calibrate(const ode::ODEProblem& problem, const ode::OneStepMethod& method,
                            double h, int p, const ErrorIndicatorSeries& indicator, int n_mc,
                            std::uint64_t seed, const std::vector<double>& sigma_grid) {
  perturbation::PerturbationSpec spec_template{p, 1.0, problem.dim()};
  auto objective = [&](double sigma) {
    return log_pi_sigma(sigma, problem, method, h, spec_template, indicator, n_mc, seed);
  };
  CalibrationResult result = maximize_profile(objective, sigma_grid);
  result.mc_samples = n_mc;
  result.seed = seed;
  return result;
}

CalibrationResult calibrate_marginalized(
    const std::function<ode::ODEProblem(RngStream&)>& draw_problem,
    const ode::OneStepMethod& method, double h, int p, int n_mc, int n_prior_draws,
    std::uint64_t seed, const std::vector<double>& sigma_grid) {
  if (n_prior_draws < 1) throw std::invalid_argument("need at least one prior draw");
  const RngStream root(seed);

  struct PriorCase {
    ode::ODEProblem problem;
    ErrorIndicatorSeries indicator;
    std::uint64_t seed;
  };
  std::vector<PriorCase> cases;
  cases.reserve(n_prior_draws);
  for (int j = 0; j < n_prior_draws; ++j) {
    RngStream prior_rng = root.child("prior").child(static_cast<std::uint64_t>(j));
    ode::ODEProblem problem = draw_problem(prior_rng);
    ErrorIndicatorSeries indicator = error_indicator_step_halving(problem, method, h);
    cases.push_back(PriorCase{std::move(problem), std::move(indicator),
                              root.child("mc").child(static_cast<std::uint64_t>(j)).key()});
  }

  auto objective = [&](double sigma) {
    double total = 0.0;
    for (const PriorCase& pc : cases) {
      perturbation::PerturbationSpec tmpl{p, 1.0, pc.problem.dim()};
      total += log_pi_sigma(sigma, pc.problem, method, h, tmpl, pc.indicator, n_mc, pc.seed);
    }
    return total / n_prior_draws;
  };
  CalibrationResult result = maximize_profile(objective, sigma_grid);
  result.mc_samples = n_mc;
  result.seed = seed;
  return result;
}

}  // namespace probode::calibration
