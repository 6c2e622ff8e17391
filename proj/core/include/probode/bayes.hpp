#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "probode/ode.hpp"
#include "probode/perturbation.hpp"
#include "probode/rng.hpp"

namespace probode::bayes {

// Noisy state observations d_j = H u(tau_j) + eta_j, eta_j ~ N(0, diag(gamma)).
// When observed_components is set, H selects those state components;
// otherwise the full state is observed.
struct ObservationSet {
  std::vector<double> times;            // ascending, nonnegative
  std::vector<Eigen::VectorXd> values;  // one vector per time, observed components only
  Eigen::VectorXd gamma_diag;           // noise variances per observed component
  std::optional<std::vector<int>> observed_components;

  int observed_dim() const { return static_cast<int>(gamma_diag.size()); }
  Eigen::VectorXd project(const Eigen::VectorXd& state) const;
  void validate() const;
};

// Gaussian log-likelihood of the observations given a trajectory evaluator
// (full state as a function of time).
double log_likelihood(const std::function<Eigen::VectorXd(double)>& trajectory,
                      const ObservationSet& obs);

struct ParamPrior {
  enum class Kind { kNormal, kLogNormal };
  Kind kind = Kind::kNormal;
  double location = 0.0;  // mean of theta (normal) or of log theta (log-normal)
  double scale = 1.0;     // matching standard deviation
};

struct SolverChoice {
  bool randomized = false;
  double sigma = 0.0;
  int p = 1;
  int inner_draws = 10;  // R, trajectories per likelihood estimate
};

// Everything the sampler needs: the parameter-to-problem map, the
// integrator, priors, solver mode, and the step size.
struct PosteriorSpec {
  std::function<ode::ODEProblem(const Eigen::VectorXd&)> model;
  ode::OneStepMethod method;
  std::vector<ParamPrior> priors;
  SolverChoice solver;
  double h = 0.1;
};

// Log of the averaged likelihood over R randomized trajectories (max-shifted,
// so full underflow returns -inf rather than throwing). Fresh noise on every
// call; trajectory r draws from rng.child(r). With sigma = 0 this equals the
// deterministic log-likelihood for any R.
double pseudo_marginal_loglik(const Eigen::VectorXd& theta, const PosteriorSpec& spec,
                              const ObservationSet& obs, RngStream rng);

struct AdaptConfig {
  int interval = 50;       // batch length for acceptance-based scale tuning
  double acc_low = 0.15;   // shrink the proposal below this batch acceptance
  double acc_high = 0.40;  // grow it above this
  double initial_scale = 1.0;
};

struct ChainOutput {
  Eigen::MatrixXd samples;  // n_steps x d, original parameter coordinates
  std::vector<double> log_post;
  double acceptance_rate = 0.0;
  std::uint64_t seed = 0;
  int burn_in = 0;  // first 10% of the chain

  // Post-burn-in draws of one coordinate.
  std::vector<double> retained(int coordinate) const;
};

// Adaptive Gaussian random-walk Metropolis with an arbitrary log-likelihood.
// Parameters with log-normal priors are sampled in log coordinates. During
// burn-in the proposal covariance tracks the chain history and a global scale
// chases the target acceptance band; both freeze afterwards. When `noisy` is
// set the likelihood of the current state is re-estimated every iteration
// (the refreshed pseudo-marginal variant); the estimate at iteration t is a
// deterministic function of (seed, t).
ChainOutput rwm_chain_generic(
    const std::function<double(const Eigen::VectorXd&, RngStream&)>& loglik,
    const std::vector<ParamPrior>& priors, int n_steps, const AdaptConfig& adapt,
    std::uint64_t seed, bool noisy);

// The ODE-posterior instantiation: pseudo-marginal when the solver is
// randomized, plain Metropolis otherwise.
ChainOutput rwm_chain(const PosteriorSpec& spec, const ObservationSet& obs, int n_steps,
                      const AdaptConfig& adapt, std::uint64_t seed);

// Closed-form posterior for inferring u0 of du/dt = lambda u from a single
// observation d_k at time k h under the randomized Euler solver:
//   gamma_h^2 = gamma^2 + sigma^2 h^{2p+1} ((1+lambda h)^{2k} - 1) / ((1+lambda h)^2 - 1),
//   zeta^-2   = (1+lambda h)^{2k} / gamma_h^2 + zeta0^-2,
//   zeta^-2 m = (1+lambda h)^k d_k / gamma_h^2 + zeta0^-2 m0.
struct ConjugatePosterior {
  double mean = 0.0;
  double variance = 0.0;
  double effective_variance = 0.0;  // gamma_h^2
};

ConjugatePosterior linear_conjugate_posterior(double lambda, double h, int k, double gamma_sq,
                                              double sigma, int p, double m0, double zeta0_sq,
                                              double d_k);

// Header `iter,theta_1..theta_d,log_post`.
void write_chain_csv(const ChainOutput& chain, const std::filesystem::path& path);

}  // namespace probode::bayes
