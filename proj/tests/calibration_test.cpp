#include "probode/calibration.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "probode/problems.hpp"

namespace probode::calibration {
namespace {

TEST(ErrorIndicator, ZeroFieldGivesZeros) {
  ode::ODEProblem problem;
  problem.f = [](const ode::State& u) { return ode::State(ode::State::Zero(u.size())); };
  problem.u0 = ode::State::Constant(1, 1.0);
  problem.T = 1.0;
  const ErrorIndicatorSeries series =
      error_indicator_step_halving(problem, ode::OneStepMethod::euler(), 0.1);
  ASSERT_EQ(series.values.size(), 11u);
  for (const auto& v : series.values) EXPECT_EQ(v[0], 0.0);
}

TEST(ErrorIndicator, LinearEulerClosedForm) {
  // E(T) = (1+h lambda)^{T/h} - (1+2h lambda)^{T/2h}.
  const ode::ODEProblem problem = problems::linear(1.0, 1.0, 1.0);
  const ErrorIndicatorSeries series =
      error_indicator_step_halving(problem, ode::OneStepMethod::euler(), 0.1);
  const double expected = std::pow(1.1, 10) - std::pow(1.2, 5);
  EXPECT_NEAR(series.values.back()[0], expected, 1e-12);
  EXPECT_NEAR(expected, 0.1054224601, 1e-9);
  // Odd mesh points use the half-step deterministic interpolant of the coarse
  // solve: E(t_1) = (1.1) - (1 + 0.1) = 0.
  EXPECT_NEAR(series.values[1][0], 0.0, 1e-15);
  // E(t_3) = 1.1^3 - 1.2 * 1.1.
  EXPECT_NEAR(series.values[3][0], std::pow(1.1, 3) - 1.2 * 1.1, 1e-12);
}

TEST(ErrorIndicator, RK4IndicatorIsTiny) {
  // Both RK4 solves track e^t closely; the closed-form gap is
  // (R(h))^{T/h} - (R(2h))^{T/2h} with R the degree-4 Taylor factor.
  const ode::ODEProblem problem = problems::linear(1.0, 1.0, 1.0);
  const ErrorIndicatorSeries series =
      error_indicator_step_halving(problem, ode::OneStepMethod::rk4(), 0.1);
  auto rk4_factor = [](double h) {
    return 1.0 + h + h * h / 2.0 + h * h * h / 6.0 + h * h * h * h / 24.0;
  };
  const double expected = std::pow(rk4_factor(0.1), 10) - std::pow(rk4_factor(0.2), 5);
  EXPECT_NEAR(series.values.back()[0], expected, 1e-12);
  EXPECT_LT(std::abs(series.values.back()[0]), 1e-4);
}

TEST(ErrorIndicator, RejectsMismatchedMesh) {
  const ode::ODEProblem problem = problems::linear(1.0, 1.0, 1.0);
  // h = 1/7 divides T but 2h does not.
  EXPECT_THROW(error_indicator_step_halving(problem, ode::OneStepMethod::euler(), 1.0 / 7.0),
               std::invalid_argument);
}

TEST(Bhattacharyya, ClosedFormValues) {
  EXPECT_EQ(bhattacharyya_gaussian(0.3, 1.0, 0.3, 1.0), 0.0);
  EXPECT_NEAR(bhattacharyya_gaussian(0.0, 1.0, 0.0, 4.0), 0.5 * std::log(1.25), 1e-12);
  EXPECT_NEAR(bhattacharyya_gaussian(0.0, 1.0, 2.0, 1.0), 0.5, 1e-12);
}

TEST(Bhattacharyya, SymmetricZeroIffEqualAdditive) {
  const double d_ab = bhattacharyya_gaussian(0.1, 0.5, -0.4, 2.0);
  const double d_ba = bhattacharyya_gaussian(-0.4, 2.0, 0.1, 0.5);
  EXPECT_DOUBLE_EQ(d_ab, d_ba);
  EXPECT_GT(d_ab, 0.0);
  EXPECT_LT(std::abs(bhattacharyya_gaussian(0.7, 0.3, 0.7, 0.3)), 1e-15);
  EXPECT_THROW(bhattacharyya_gaussian(0.0, 0.0, 0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(bhattacharyya_gaussian(0.0, 1.0, 0.0, -1.0), std::invalid_argument);
}

TEST(Bhattacharyya, MatchesNumericalIntegration) {
  // d = -ln integral sqrt(p q) for two Gaussians.
  const double mu1 = 0.3, v1 = 0.8, mu2 = -0.2, v2 = 1.7;
  auto density = [](double x, double mu, double v) {
    return std::exp(-0.5 * (x - mu) * (x - mu) / v) / std::sqrt(2.0 * M_PI * v);
  };
  double integral = 0.0;
  const int n = 400000;
  const double lo = -12.0, hi = 12.0, dx = (hi - lo) / n;
  for (int i = 0; i < n; ++i) {
    const double x = lo + (i + 0.5) * dx;
    integral += std::sqrt(density(x, mu1, v1) * density(x, mu2, v2)) * dx;
  }
  EXPECT_NEAR(bhattacharyya_gaussian(mu1, v1, mu2, v2), -std::log(integral), 1e-6);
}

TEST(LogPiSigma, DeterministicGivenSeed) {
  const ode::ODEProblem problem = problems::linear(1.0, 1.0, 1.0);
  const ErrorIndicatorSeries indicator =
      error_indicator_step_halving(problem, ode::OneStepMethod::euler(), 0.1);
  const perturbation::PerturbationSpec tmpl{1, 1.0, 1};
  const double a =
      log_pi_sigma(0.3, problem, ode::OneStepMethod::euler(), 0.1, tmpl, indicator, 100, 42);
  const double b =
      log_pi_sigma(0.3, problem, ode::OneStepMethod::euler(), 0.1, tmpl, indicator, 100, 42);
  EXPECT_EQ(a, b);
  const double c =
      log_pi_sigma(0.3, problem, ode::OneStepMethod::euler(), 0.1, tmpl, indicator, 100, 43);
  EXPECT_NE(a, c);
}

TEST(LogPiSigma, SeedsAgreeWithinMonteCarloSpread) {
  const ode::ODEProblem problem = problems::linear(1.0, 1.0, 1.0);
  const ErrorIndicatorSeries indicator =
      error_indicator_step_halving(problem, ode::OneStepMethod::euler(), 0.1);
  const perturbation::PerturbationSpec tmpl{1, 1.0, 1};
  std::vector<double> values;
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    values.push_back(
        log_pi_sigma(0.4, problem, ode::OneStepMethod::euler(), 0.1, tmpl, indicator, 400, seed));
  }
  double mean = 0.0;
  for (double v : values) mean += v / values.size();
  double sd = 0.0;
  for (double v : values) sd += (v - mean) * (v - mean);
  sd = std::sqrt(sd / (values.size() - 1));
  for (double v : values) EXPECT_LE(std::abs(v - mean), 3.5 * sd);
}

TEST(LogPiSigma, HugeSigmaIsPenalized) {
  const ode::ODEProblem problem = problems::linear(1.0, 1.0, 1.0);
  const ErrorIndicatorSeries indicator =
      error_indicator_step_halving(problem, ode::OneStepMethod::euler(), 0.1);
  const perturbation::PerturbationSpec tmpl{1, 1.0, 1};
  const double at_moderate =
      log_pi_sigma(0.5, problem, ode::OneStepMethod::euler(), 0.1, tmpl, indicator, 200, 7);
  const double at_huge =
      log_pi_sigma(50.0, problem, ode::OneStepMethod::euler(), 0.1, tmpl, indicator, 200, 7);
  EXPECT_LT(at_huge, at_moderate);
}

TEST(LogPiSigma, RejectsBadArguments) {
  const ode::ODEProblem problem = problems::linear(1.0, 1.0, 1.0);
  const ErrorIndicatorSeries indicator =
      error_indicator_step_halving(problem, ode::OneStepMethod::euler(), 0.1);
  const perturbation::PerturbationSpec tmpl{1, 1.0, 1};
  EXPECT_THROW(
      log_pi_sigma(0.0, problem, ode::OneStepMethod::euler(), 0.1, tmpl, indicator, 100, 1),
      std::invalid_argument);
  EXPECT_THROW(
      log_pi_sigma(0.5, problem, ode::OneStepMethod::euler(), 0.1, tmpl, indicator, 1, 1),
      std::invalid_argument);
  ErrorIndicatorSeries bad = indicator;
  bad.values.pop_back();
  EXPECT_THROW(log_pi_sigma(0.5, problem, ode::OneStepMethod::euler(), 0.1, tmpl, bad, 100, 1),
               std::invalid_argument);
}

// Constant-indicator oracle on f == 0: the exact per-step law is
// N(u0, sigma^2 h^3 k), so the exact profile is available in closed form and
// its brute-force maximizer must agree with the Monte-Carlo grid scan.
TEST(LogPiSigma, MatchesBruteForceScanOnFlatField) {
  ode::ODEProblem problem;
  problem.f = [](const ode::State& u) { return ode::State(ode::State::Zero(u.size())); };
  problem.u0 = ode::State::Constant(1, 1.0);
  problem.T = 1.0;
  const double h = 0.1, c = 0.01;
  const int K = 10;
  ErrorIndicatorSeries indicator;
  for (int k = 0; k <= K; ++k) {
    indicator.times.push_back(k * h);
    indicator.values.push_back(Eigen::VectorXd::Constant(1, c));
  }

  auto exact_log_pi = [&](double sigma) {
    double total = 0.0;
    for (int k = 1; k <= K; ++k) {
      const double v = sigma * sigma * h * h * h * k;
      total -= bhattacharyya_gaussian(0.0, v, 0.0, c * c);
    }
    return total;
  };
  double best_exact = -1e300, sigma_exact = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const double sigma = 0.01 * std::pow(200.0, i / 1999.0);
    const double v = exact_log_pi(sigma);
    if (v > best_exact) {
      best_exact = v;
      sigma_exact = sigma;
    }
  }

  const perturbation::PerturbationSpec tmpl{1, 1.0, 1};
  double best_mc = -1e300, sigma_mc = 0.0;
  for (int i = 0; i < 60; ++i) {
    const double sigma = 0.02 * std::pow(50.0, i / 59.0);
    const double v =
        log_pi_sigma(sigma, problem, ode::OneStepMethod::euler(), h, tmpl, indicator, 2000, 11);
    if (v > best_mc) {
      best_mc = v;
      sigma_mc = sigma;
    }
  }
  EXPECT_LT(std::abs(std::log(sigma_mc / sigma_exact)), std::log(1.35));
}

TEST(CalibrateMarginalized, AveragesOverPriorDraws) {
  // Problems drawn from a prior over lambda; the profile is deterministic
  // given the seed and lands near the single-problem answer for a tight prior.
  auto draw_problem = [](RngStream& rng) {
    const double lambda = 1.0 + 0.05 * rng.gauss();
    return problems::linear(lambda, 1.0, 1.0);
  };
  std::vector<double> grid;
  for (int i = 0; i < 10; ++i) grid.push_back(0.05 * std::pow(40.0, i / 9.0));
  const CalibrationResult a = calibrate_marginalized(draw_problem, ode::OneStepMethod::euler(),
                                                     0.1, 1, 200, 4, 13, grid);
  const CalibrationResult b = calibrate_marginalized(draw_problem, ode::OneStepMethod::euler(),
                                                     0.1, 1, 200, 4, 13, grid);
  EXPECT_EQ(a.sigma_star, b.sigma_star);

  const ode::ODEProblem fixed = problems::linear(1.0, 1.0, 1.0);
  const ErrorIndicatorSeries indicator =
      error_indicator_step_halving(fixed, ode::OneStepMethod::euler(), 0.1);
  const CalibrationResult single =
      calibrate(fixed, ode::OneStepMethod::euler(), 0.1, 1, indicator, 200, 13, grid);
  EXPECT_LT(std::abs(std::log(a.sigma_star / single.sigma_star)), std::log(2.0));
}

TEST(MaximizeProfile, ValidatesGrid) {
  auto f = [](double s) { return -(s - 0.3) * (s - 0.3); };
  EXPECT_THROW(maximize_profile(f, {}), std::invalid_argument);
  EXPECT_THROW(maximize_profile(f, {0.2, 0.1}), std::invalid_argument);
  EXPECT_THROW(maximize_profile(f, {-0.1, 0.2}), std::invalid_argument);
}

TEST(MaximizeProfile, RefinesTowardsSmoothOptimum) {
  auto f = [](double s) { return -(std::log(s) - std::log(0.3)) * (std::log(s) - std::log(0.3)); };
  std::vector<double> grid;
  for (int i = 0; i < 12; ++i) grid.push_back(0.05 * std::pow(40.0, i / 11.0));
  const CalibrationResult result = maximize_profile(f, grid);
  EXPECT_NEAR(std::log(result.sigma_star), std::log(0.3), 0.35);
  // sigma_star attains the profile maximum.
  for (const auto& [s, v] : result.profile) EXPECT_LE(v, f(result.sigma_star) + 1e-15);
  // Refinement extends the profile past the initial grid.
  EXPECT_GT(result.profile.size(), grid.size());
}

TEST(Calibrate, ReturnsGridScanOptimumAndUnimodalProfile) {
  const ode::ODEProblem problem = problems::linear(1.0, 1.0, 1.0);
  const ode::OneStepMethod method = ode::OneStepMethod::euler();
  const double h = 0.1;
  const ErrorIndicatorSeries indicator = error_indicator_step_halving(problem, method, h);
  const int n_mc = 300;
  const std::uint64_t seed = 9;

  std::vector<double> grid;
  for (int i = 0; i < 14; ++i) grid.push_back(0.02 * std::pow(100.0, i / 13.0));
  const CalibrationResult result = calibrate(problem, method, h, 1, indicator, n_mc, seed, grid);

  // Brute-force scan of the same CRN objective on a fine grid.
  const perturbation::PerturbationSpec tmpl{1, 1.0, 1};
  double best = -1e300, sigma_brute = 0.0;
  for (int i = 0; i < 80; ++i) {
    const double sigma = 0.02 * std::pow(100.0, i / 79.0);
    const double v = log_pi_sigma(sigma, problem, method, h, tmpl, indicator, n_mc, seed);
    if (v > best) {
      best = v;
      sigma_brute = sigma;
    }
  }
  // Agreement within one coarse-grid bracket.
  EXPECT_LT(std::abs(std::log(result.sigma_star / sigma_brute)), std::log(100.0) / 13.0 + 1e-9);

  // Profile recorded for every evaluation; sigma_star attains its maximum.
  double profile_max = -1e300, at = 0.0;
  for (const auto& [s, v] : result.profile) {
    if (v > profile_max) {
      profile_max = v;
      at = s;
    }
  }
  EXPECT_EQ(at, result.sigma_star);
  EXPECT_EQ(result.mc_samples, n_mc);
  EXPECT_EQ(result.seed, seed);

  // Unimodal after CRN smoothing: at most two sign changes of the discrete
  // differences over the sorted profile.
  auto profile = result.profile;
  std::sort(profile.begin(), profile.end());
  int sign_changes = 0;
  int prev_sign = 0;
  for (std::size_t i = 1; i < profile.size(); ++i) {
    const double diff = profile[i].second - profile[i - 1].second;
    const int sign = diff > 0 ? 1 : (diff < 0 ? -1 : 0);
    if (sign != 0 && prev_sign != 0 && sign != prev_sign) ++sign_changes;
    if (sign != 0) prev_sign = sign;
  }
  EXPECT_LE(sign_changes, 2);
}

}  // namespace
}  // namespace probode::calibration
