#pragma once

#include <cstdint>
#include <vector>

#include "probode/ode.hpp"
#include "probode/perturbation.hpp"

namespace probode::convergence {

// Result of a log-log order fit. When every error is exactly zero (a
// noise-free method that solves the problem exactly) the fit degenerates and
// is reported with slope = +inf, intercept = -inf, r_squared = 1 rather than
// an exception.
struct OrderFit {
  std::vector<double> h_values;
  std::vector<double> errors;
  std::vector<double> errors_stderr;  // empty when the errors are exact
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

// Ordinary least squares of log(err) against log(h). Requires at least two
// pairs, all positive.
OrderFit fit_loglog(const std::vector<double>& hs, const std::vector<double>& errs);

// Empirical strong order: for each h, the RMS over M randomized trajectories
// of the sup-over-mesh squared error against a deterministic RK4 reference at
// h_ref = min(h)/20, followed by a log-log slope fit. Replicate m of ladder
// entry i draws from seed substream (i, m).
OrderFit estimate_strong_order(const ode::ODEProblem& problem, const ode::OneStepMethod& method,
                               const perturbation::PerturbationSpec& spec,
                               const std::vector<double>& h_values, int n_replicates,
                               std::uint64_t seed);

// Modified SDE solved by the randomized Euler method on scalar linear
// f(u) = lambda u, to two drift corrections:
//   d u = a_h u dt + sigma h^p dW,  a_h = lambda - h lambda^2/2 + h^2 lambda^3/3.
struct ModifiedLinearSDE {
  double lambda = 1.0;
  double h = 0.1;
  int p = 1;
  double sigma = 0.0;

  double drift_coefficient() const;
  double diffusion_coefficient() const;  // sigma h^p
  double mean_at(double T, double u0) const;
  double variance_at(double T) const;
};

enum class WeakFunctional { kIdentity, kSquare };

// E[phi] under three laws for the randomized Euler method on f(u) = lambda u:
// the numerical chain at T (exact Gaussian recursion, no Monte Carlo), the
// modified SDE at T, and the original ODE at T.
struct LinearWeakErrors {
  double numerical = 0.0;
  double modified_sde = 0.0;
  double original_ode = 0.0;
};

LinearWeakErrors weak_error_linear(double lambda, double u0, double T, double h,
                                   const perturbation::PerturbationSpec& spec,
                                   WeakFunctional phi);

}  // namespace probode::convergence
