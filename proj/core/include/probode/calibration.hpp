#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "probode/ode.hpp"
#include "probode/perturbation.hpp"

namespace probode::calibration {

// Computable proxy for the discretization error along the mesh, one value
// per state dimension per mesh point.
struct ErrorIndicatorSeries {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> values;
};

// Step-halving indicator E(t_k) = U^{h,0}(t_k) - U^{2h,0}(t_k), where odd
// fine-mesh points evaluate the coarse solve through its deterministic
// interpolant. Requires both h and 2h to divide T.
ErrorIndicatorSeries error_indicator_step_halving(const ode::ODEProblem& problem,
                                                  const ode::OneStepMethod& method, double h);

// Bhattacharyya distance between two univariate Gaussians:
//   (mu1-mu2)^2 / (4(v1+v2)) + log((v1+v2) / (2 sqrt(v1 v2))) / 2.
// Distances add over independent dimensions.
double bhattacharyya_gaussian(double mu1, double v1, double mu2, double v2);

// Log of the unnormalized scale-matching density
//   pi(sigma) ~ prod_k exp(-d(N(mean_k, var_k), N(U^{h,0}_k, max(E_k^2, eps_k^2))))
// with per-step moments estimated from n_mc common-random-number trajectories
// (trajectory m draws from substream (seed, m), so the value is a
// deterministic function of (sigma, seed)). The comparison variance is
// floored at eps_k = 1e-12 (1 + |U^{h,0}_k|) so a sign change of the
// indicator cannot produce a degenerate Gaussian. The sum runs over steps
// k >= 1; at k = 0 both laws are the point mass at u0.
double log_pi_sigma(double sigma, const ode::ODEProblem& problem, const ode::OneStepMethod& method,
                    double h, const perturbation::PerturbationSpec& spec_template,
                    const ErrorIndicatorSeries& indicator, int n_mc, std::uint64_t seed);

struct CalibrationResult {
  double sigma_star = 0.0;
  std::vector<std::pair<double, double>> profile;  // (sigma, log pi) evaluations
  int mc_samples = 0;
  std::uint64_t seed = 0;
};

// Grid evaluation of an arbitrary log-density followed by three rounds of
// golden-section refinement around the best grid point. sigma_star attains
// the maximum of the recorded profile.
CalibrationResult maximize_profile(const std::function<double(double)>& log_pi,
                                   const std::vector<double>& sigma_grid, int golden_rounds = 3);

// MAP noise scale by common-random-number grid search plus refinement.
CalibrationResult calibrate(const ode::ODEProblem& problem, const ode::OneStepMethod& method,
                            double h, int p, const ErrorIndicatorSeries& indicator, int n_mc,
                            std::uint64_t seed, const std::vector<double>& sigma_grid);

// Calibration with the problem inputs marginalized: log pi(sigma) is averaged
// over n_prior_draws problems sampled from `draw_problem` (prior draw j uses
// substream (seed, "prior", j)), each with its own step-halving indicator.
// Common random numbers are shared across sigma.
CalibrationResult calibrate_marginalized(
    const std::function<ode::ODEProblem(RngStream&)>& draw_problem,
    const ode::OneStepMethod& method, double h, int p, int n_mc, int n_prior_draws,
    std::uint64_t seed, const std::vector<double>& sigma_grid);

}  // namespace probode::calibration
