#include "probode/convergence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace probode::convergence {

OrderFit fit_loglog(const std::vector<double>& hs, const std::vector<double>& errs) {
  if (hs.size() != errs.size() || hs.size() < 2) {
    throw std::invalid_argument("log-log fit needs at least two (h, error) pairs");
  }
  for (std::size_t i = 0; i < hs.size(); ++i) {
    if (!(hs[i] > 0.0) || !(errs[i] > 0.0)) {
      throw std::invalid_argument("log-log fit requires positive step sizes and errors");
    }
  }

  const std::size_t n = hs.size();
  double sx = 0.0, sy = 0.0;
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = std::log(hs[i]);
    y[i] = std::log(errs[i]);
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("log-log fit requires distinct step sizes");

  OrderFit fit;
  fit.h_values = hs;
  fit.errors = errs;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (fit.intercept + fit.slope * x[i]);
    ss_res += r * r;
  }
  fit.r_squared = (syy == 0.0) ? 1.0 : 1.0 - ss_res / syy;
  return fit;
}

OrderFit estimate_strong_order(const ode::ODEProblem& problem, const ode::OneStepMethod& method,
                               const perturbation::PerturbationSpec& spec,
                               const std::vector<double>& h_values, int n_replicates,
                               std::uint64_t seed) {
  problem.validate();
  spec.validate();
  if (h_values.size() < 3) throw std::invalid_argument("need at least three ladder step sizes");
  if (n_replicates < 50) throw std::invalid_argument("need at least 50 replicates per step size");

  double h_min = h_values.front();
  for (double h : h_values) {
    if (!(h > 0.0)) throw std::invalid_argument("step sizes must be positive");
    const double ratio = problem.T / h;
    if (std::abs(ratio - std::round(ratio)) > 1e-9) {
      throw std::invalid_argument("every ladder step size must divide T");
    }
    h_min = std::min(h_min, h);
  }

  // Reference: deterministic RK4 on a mesh 20x finer than the finest ladder entry.
  const double h_ref = h_min / 20.0;
  const ode::TrajectorySample ref = ode::solve_deterministic(problem, ode::OneStepMethod::rk4(), h_ref);

  const RngStream root(seed);
  std::vector<double> errors(h_values.size());
  std::vector<double> errors_se(h_values.size());
  for (std::size_t i = 0; i < h_values.size(); ++i) {
    const double h = h_values[i];
    const long stride = std::lround(h / h_ref);
    if (std::abs(h / h_ref - static_cast<double>(stride)) > 1e-9) {
      throw std::invalid_argument("ladder step sizes must be integer multiples of the reference step");
    }
    const RngStream ladder_rng = root.child(i);
    double sum = 0.0, sum_sq = 0.0;
    for (int m = 0; m < n_replicates; ++m) {
      const ode::TrajectorySample traj =
          ode::solve(problem, method, spec, h, ladder_rng.child(static_cast<std::uint64_t>(m)));
      double sup_sq = 0.0;
      for (std::size_t k = 0; k < traj.states.size(); ++k) {
        const double e = (traj.states[k] - ref.states[k * stride]).norm();
        sup_sq = std::max(sup_sq, e * e);
      }
      sum += sup_sq;
      sum_sq += sup_sq * sup_sq;
    }
    const double mean_sup_sq = sum / n_replicates;
    errors[i] = std::sqrt(mean_sup_sq);
    const double var_sup_sq =
        std::max(0.0, (sum_sq - n_replicates * mean_sup_sq * mean_sup_sq) / (n_replicates - 1));
    const double se_mean = std::sqrt(var_sup_sq / n_replicates);
    errors_se[i] = errors[i] > 0.0 ? se_mean / (2.0 * errors[i]) : 0.0;
  }

  const bool all_zero =
      std::all_of(errors.begin(), errors.end(), [](double e) { return e == 0.0; });
  if (all_zero) {
    // Exactly solved problem with zero noise: report the infinite-order
    // sentinel instead of failing the fit.
    OrderFit fit;
    fit.h_values = h_values;
    fit.errors = errors;
    fit.errors_stderr = errors_se;
    fit.slope = std::numeric_limits<double>::infinity();
    fit.intercept = -std::numeric_limits<double>::infinity();
    fit.r_squared = 1.0;
    return fit;
  }

  OrderFit fit = fit_loglog(h_values, errors);
  fit.errors_stderr = errors_se;
  return fit;
}

double ModifiedLinearSDE::drift_coefficient() const {
  return lambda - h * lambda * lambda / 2.0 + h * h * lambda * lambda * lambda / 3.0;
}

double ModifiedLinearSDE::diffusion_coefficient() const { return sigma * std::pow(h, p); }

double ModifiedLinearSDE::mean_at(double T, double u0) const {
  return std::exp(drift_coefficient() * T) * u0;
}

double ModifiedLinearSDE::variance_at(double T) const {
  const double a = drift_coefficient();
  const double c = diffusion_coefficient();
  if (a == 0.0) return c * c * T;
  return c * c * std::expm1(2.0 * a * T) / (2.0 * a);
}

LinearWeakErrors weak_error_linear(double lambda, double u0, double T, double h,
                                   const perturbation::PerturbationSpec& spec,
                                   WeakFunctional phi) {
  spec.validate();
  if (!(h > 0.0) || !(T > 0.0)) throw std::invalid_argument("T and h must be positive");
  const double ratio = T / h;
  if (std::abs(ratio - std::round(ratio)) > 1e-9) {
    throw std::invalid_argument("h must divide T");
  }
  const long K = std::lround(ratio);

  // Exact Gaussian recursion for U_{k+1} = (1 + h lambda) U_k + xi_k.
  const double growth = 1.0 + h * lambda;
  const double mean_num = std::pow(growth, static_cast<double>(K)) * u0;
  const double xi_var = spec.sigma * spec.sigma * std::pow(h, 2 * spec.p + 1);
  double var_num;
  const double g2 = growth * growth;
  if (g2 == 1.0) {
    var_num = xi_var * static_cast<double>(K);
  } else {
    var_num = xi_var * (std::pow(g2, static_cast<double>(K)) - 1.0) / (g2 - 1.0);
  }

  const ModifiedLinearSDE sde{lambda, h, spec.p, spec.sigma};
  const double mean_sde = sde.mean_at(T, u0);
  const double var_sde = sde.variance_at(T);
  const double mean_ode = std::exp(lambda * T) * u0;

  LinearWeakErrors out;
  switch (phi) {
    case WeakFunctional::kIdentity:
      out.numerical = mean_num;
      out.modified_sde = mean_sde;
      out.original_ode = mean_ode;
      break;
    case WeakFunctional::kSquare:
      out.numerical = mean_num * mean_num + var_num;
      out.modified_sde = mean_sde * mean_sde + var_sde;
      out.original_ode = mean_ode * mean_ode;
      break;
  }
  return out;
}

}  // namespace probode::convergence
