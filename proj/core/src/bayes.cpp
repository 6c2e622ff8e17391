#include "probode/bayes.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "probode/io.hpp"
#include "probode/stats.hpp"

namespace probode::bayes {

Eigen::VectorXd ObservationSet::project(const Eigen::VectorXd& state) const {
  if (!observed_components) return state;
  Eigen::VectorXd out(observed_components->size());
  for (std::size_t i = 0; i < observed_components->size(); ++i) {
    out[static_cast<int>(i)] = state[(*observed_components)[i]];
  }
  return out;
}

void ObservationSet::validate() const {
  if (times.size() != values.size()) {
    throw std::invalid_argument("observation times and values differ in length");
  }
  for (std::size_t j = 0; j < times.size(); ++j) {
    if (!(times[j] >= 0.0)) throw std::invalid_argument("observation times must be nonnegative");
    if (j > 0 && times[j] < times[j - 1]) {
      throw std::invalid_argument("observation times must be ascending");
    }
    if (values[j].size() != gamma_diag.size()) {
      throw std::invalid_argument("observation dimension does not match the noise covariance");
    }
  }
  for (int i = 0; i < gamma_diag.size(); ++i) {
    if (!(gamma_diag[i] > 0.0)) throw std::invalid_argument("noise variances must be positive");
  }
}

double log_likelihood(const std::function<Eigen::VectorXd(double)>& trajectory,
                      const ObservationSet& obs) {
  obs.validate();
  double ll = 0.0;
  for (std::size_t j = 0; j < obs.times.size(); ++j) {
    const Eigen::VectorXd predicted = obs.project(trajectory(obs.times[j]));
    for (int i = 0; i < obs.gamma_diag.size(); ++i) {
      const double r = obs.values[j][i] - predicted[i];
      ll += -0.5 * std::log(2.0 * std::numbers::pi * obs.gamma_diag[i]) -
            0.5 * r * r / obs.gamma_diag[i];
    }
  }
  return ll;
}

double pseudo_marginal_loglik(const Eigen::VectorXd& theta, const PosteriorSpec& spec,
                              const ObservationSet& obs, RngStream rng) {
  const ode::ODEProblem problem = spec.model(theta);
  const int R = spec.solver.randomized ? spec.solver.inner_draws : 1;
  if (R < 1) throw std::invalid_argument("pseudo-marginal estimate needs at least one draw");

  perturbation::PerturbationSpec pspec{spec.solver.p,
                                       spec.solver.randomized ? spec.solver.sigma : 0.0,
                                       problem.dim()};
  std::vector<double> lls(R);
  for (int r = 0; r < R; ++r) {
    ode::TrajectorySample traj =
        ode::solve(problem, spec.method, pspec, spec.h, rng.child(static_cast<std::uint64_t>(r)));
    RngStream interp_rng = rng.child(static_cast<std::uint64_t>(r)).child("interp");
    auto evaluator = [&](double t) {
      return ode::interpolate(traj, spec.method, pspec, t, interp_rng);
    };
    lls[r] = log_likelihood(evaluator, obs);
  }
  return stats::log_mean_exp(lls);
}

namespace {

Eigen::VectorXd to_parameter_space(const Eigen::VectorXd& z,
                                   const std::vector<ParamPrior>& priors) {
  Eigen::VectorXd theta(z.size());
  for (int i = 0; i < z.size(); ++i) {
    theta[i] = priors[i].kind == ParamPrior::Kind::kLogNormal ? std::exp(z[i]) : z[i];
  }
  return theta;
}

// Both prior kinds are Gaussian in the sampling coordinates.
double prior_logpdf_z(const Eigen::VectorXd& z, const std::vector<ParamPrior>& priors) {
  double lp = 0.0;
  for (int i = 0; i < z.size(); ++i) {
    const double s = priors[i].scale;
    const double r = (z[i] - priors[i].location) / s;
    lp += -0.5 * std::log(2.0 * std::numbers::pi * s * s) - 0.5 * r * r;
  }
  return lp;
}

}  // namespace

std::vector<double> ChainOutput::retained(int coordinate) const {
  std::vector<double> out;
  out.reserve(samples.rows() - burn_in);
  for (int i = burn_in; i < samples.rows(); ++i) out.push_back(samples(i, coordinate));
  return out;
}

ChainOutput rwm_chain_generic(
    const std::function<double(const Eigen::VectorXd&, RngStream&)>& loglik,
    const std::vector<ParamPrior>& priors, int n_steps, const AdaptConfig& adapt,
    std::uint64_t seed, bool noisy) {
  const int d = static_cast<int>(priors.size());
  if (d < 1) throw std::invalid_argument("chain needs at least one parameter");
  if (n_steps < 1) throw std::invalid_argument("chain needs at least one step");
  for (const auto& prior : priors) {
    if (!(prior.scale > 0.0)) throw std::invalid_argument("prior scales must be positive");
  }

  const RngStream root(seed);
  RngStream chain_rng = root.child("chain");

  Eigen::VectorXd z(d);
  for (int i = 0; i < d; ++i) z[i] = priors[i].location;
  Eigen::VectorXd theta = to_parameter_space(z, priors);

  double lprior = prior_logpdf_z(z, priors);
  if (std::isinf(lprior) || std::isnan(lprior)) {
    throw std::invalid_argument("prior density vanishes at the chain start");
  }
  RngStream init_rng = root.child("lik-init");
  double llik = loglik(theta, init_rng);

  const int burn_in = n_steps / 10;
  ChainOutput out;
  out.samples.resize(n_steps, d);
  out.log_post.resize(n_steps);
  out.seed = seed;
  out.burn_in = burn_in;

  // Proposal: z' = z + scale * L xi. The covariance estimate starts from the
  // prior and tracks the burn-in history; the scalar scale chases the target
  // acceptance band in batches.
  Eigen::MatrixXd prior_cov = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i) prior_cov(i, i) = priors[i].scale * priors[i].scale;
  Eigen::MatrixXd chol = prior_cov.llt().matrixL();
  double scale = 2.38 / std::sqrt(static_cast<double>(d)) * adapt.initial_scale;

  Eigen::VectorXd z_mean = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd z_m2 = Eigen::MatrixXd::Zero(d, d);
  long accepted_total = 0;
  int window_accepted = 0;

  for (int iter = 0; iter < n_steps; ++iter) {
    if (noisy) {
      RngStream curr_rng = root.child("curr").child(static_cast<std::uint64_t>(iter));
      llik = loglik(theta, curr_rng);
    }

    Eigen::VectorXd xi(d);
    for (int i = 0; i < d; ++i) xi[i] = chain_rng.gauss();
    const Eigen::VectorXd z_prop = z + scale * (chol * xi);
    const Eigen::VectorXd theta_prop = to_parameter_space(z_prop, priors);
    const double lprior_prop = prior_logpdf_z(z_prop, priors);
    RngStream prop_rng = root.child("prop").child(static_cast<std::uint64_t>(iter));
    const double llik_prop = loglik(theta_prop, prop_rng);

    const double log_alpha = (llik_prop + lprior_prop) - (llik + lprior);
    const double u = chain_rng.uniform();
    if (std::log(u) < log_alpha) {
      z = z_prop;
      theta = theta_prop;
      llik = llik_prop;
      lprior = lprior_prop;
      ++accepted_total;
      ++window_accepted;
    }

    out.samples.row(iter) = theta.transpose();
    out.log_post[iter] = llik + lprior;

    if (iter < burn_in) {
      const double count = static_cast<double>(iter + 1);
      const Eigen::VectorXd delta = z - z_mean;
      z_mean += delta / count;
      z_m2 += delta * (z - z_mean).transpose();

      if ((iter + 1) % adapt.interval == 0) {
        const double acc = static_cast<double>(window_accepted) / adapt.interval;
        window_accepted = 0;
        if (acc < adapt.acc_low) {
          scale *= 0.5;
        } else if (acc > adapt.acc_high) {
          scale *= 2.0;
        }
        if (iter + 1 >= 4 * d) {
          Eigen::MatrixXd cov = z_m2 / count;
          // Ridge keeps the factorization alive before the chain has moved.
          cov += 1e-12 * prior_cov + 1e-300 * Eigen::MatrixXd::Identity(d, d);
          Eigen::LLT<Eigen::MatrixXd> llt(cov);
          if (llt.info() == Eigen::Success) chol = llt.matrixL();
        }
      }
    }
  }

  out.acceptance_rate = static_cast<double>(accepted_total) / n_steps;
  return out;
}

ChainOutput rwm_chain(const PosteriorSpec& spec, const ObservationSet& obs, int n_steps,
                      const AdaptConfig& adapt, std::uint64_t seed) {
  obs.validate();
  auto loglik = [&](const Eigen::VectorXd& theta, RngStream& rng) {
    return pseudo_marginal_loglik(theta, spec, obs, rng);
  };
  return rwm_chain_generic(loglik, spec.priors, n_steps, adapt, seed, spec.solver.randomized);
}

ConjugatePosterior linear_conjugate_posterior(double lambda, double h, int k, double gamma_sq,
                                              double sigma, int p, double m0, double zeta0_sq,
                                              double d_k) {
  if (!(lambda > 0.0) || !(h > 0.0) || k < 1) {
    throw std::invalid_argument("conjugate posterior needs lambda > 0, h > 0, k >= 1");
  }
  if (!(gamma_sq > 0.0) || !(zeta0_sq > 0.0)) {
    throw std::invalid_argument("conjugate posterior needs positive variances");
  }
  const double growth = 1.0 + lambda * h;
  const double g2k = std::pow(growth, 2.0 * k);
  const double gamma_h_sq =
      gamma_sq + sigma * sigma * std::pow(h, 2 * p + 1) * (g2k - 1.0) / (growth * growth - 1.0);

  ConjugatePosterior post;
  post.effective_variance = gamma_h_sq;
  const double precision = g2k / gamma_h_sq + 1.0 / zeta0_sq;
  post.variance = 1.0 / precision;
  post.mean =
      post.variance * (std::pow(growth, static_cast<double>(k)) * d_k / gamma_h_sq + m0 / zeta0_sq);
  return post;
}

void write_chain_csv(const ChainOutput& chain, const std::filesystem::path& path) {
  const int d = static_cast<int>(chain.samples.cols());
  std::vector<std::string> header;
  header.emplace_back("iter");
  for (int i = 1; i <= d; ++i) header.push_back("theta_" + std::to_string(i));
  header.emplace_back("log_post");

  io::CsvWriter csv(path);
  csv.write_header(header);
  for (int iter = 0; iter < chain.samples.rows(); ++iter) {
    std::string row = std::to_string(iter);
    for (int i = 0; i < d; ++i) row += "," + io::format_double(chain.samples(iter, i));
    row += "," + io::format_double(chain.log_post[iter]);
    csv.write_row(row);
  }
}

}  // namespace probode::bayes
