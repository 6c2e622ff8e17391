#include "probode/ode.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "probode/io.hpp"

namespace probode::ode {

void ODEProblem::validate() const {
  if (!f) throw std::invalid_argument("ODE problem needs a vector field");
  if (u0.size() < 1) throw std::invalid_argument("ODE problem needs a nonempty initial state");
  if (!(T > 0.0)) throw std::invalid_argument("final time T must be positive");
}

int OneStepMethod::deterministic_order() const {
  switch (kind) {
    case MethodKind::kEuler:
      return 1;
    case MethodKind::kRK4:
      return 4;
    case MethodKind::kIntegratedOU:
      return 1;
  }
  return 1;
}

void OneStepMethod::validate(int dim) const {
  if (kind == MethodKind::kIntegratedOU) {
    if (ou_lambda.size() != dim) {
      throw std::invalid_argument("integrated OU method needs one relaxation rate per dimension");
    }
    for (int i = 0; i < dim; ++i) {
      if (!(ou_lambda[i] > 0.0)) {
        throw std::invalid_argument("integrated OU relaxation rates must be positive");
      }
    }
  }
}

State deterministic_step(const OneStepMethod& method, const VectorField& f, const State& u,
                         double h) {
  if (!(h > 0.0)) throw std::invalid_argument("step length h must be positive");
  switch (method.kind) {
    case MethodKind::kEuler:
      return u + h * f(u);
    case MethodKind::kRK4: {
      const State k1 = f(u);
      const State k2 = f(u + (0.5 * h) * k1);
      const State k3 = f(u + (0.5 * h) * k2);
      const State k4 = f(u + h * k3);
      return u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    case MethodKind::kIntegratedOU: {
      method.validate(static_cast<int>(u.size()));
      const State fu = f(u);
      State next = u;
      for (int i = 0; i < u.size(); ++i) {
        const double lam = method.ou_lambda[i];
        next[i] += (-std::expm1(-lam * h) / lam) * fu[i];
      }
      return next;
    }
  }
  throw std::logic_error("unknown one-step method");
}

namespace {

// (t - 2(1-e^{-x})/lambda + (1-e^{-2x})/(2 lambda)) written as t*phi(x) with
// x = lambda t and phi(x) = sum_{k>=2} (-1)^k (2^k - 2) x^k / (k+1)!.
double iou_shape(double x) {
  if (x < 0.5) {
    double phi = 0.0;
    double xk = x;           // x^k
    double fact = 2.0;       // (k+1)!
    double pow2 = 2.0;       // 2^k
    double sign = 1.0;
    for (int k = 2; k <= 16; ++k) {
      xk *= x;
      fact *= static_cast<double>(k + 1);
      pow2 *= 2.0;
      phi += sign * (pow2 - 2.0) / fact * xk;
      sign = -sign;
    }
    return phi;
  }
  return 1.0 - 2.0 * (-std::expm1(-x)) / x + (-std::expm1(-2.0 * x)) / (2.0 * x);
}

}  // namespace

double integrated_ou_variance(double lambda, double Sigma, double t) {
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  if (!(t >= 0.0)) throw std::invalid_argument("time must be nonnegative");
  const double x = lambda * t;
  return 2.0 * Sigma / (lambda * lambda) * t * iou_shape(x);
}

double integrated_ou_sigma_for(double lambda, double h, double target) {
  if (!(lambda > 0.0) || !(h > 0.0)) throw std::invalid_argument("lambda and h must be positive");
  const double g = 2.0 / (lambda * lambda) * h * iou_shape(lambda * h);
  return target / g;
}

StepResult probabilistic_step(const OneStepMethod& method,
                              const perturbation::PerturbationSpec& spec, const VectorField& f,
                              const State& u, double h, RngStream& rng) {
  spec.validate();
  if (spec.dim != u.size()) {
    throw std::invalid_argument("perturbation dimension does not match the state");
  }

  StepResult result;
  result.noise.h = h;
  if (method.kind == MethodKind::kIntegratedOU && spec.sigma > 0.0) {
    method.validate(static_cast<int>(u.size()));
    if (!(h > 0.0)) throw std::invalid_argument("step length h must be positive");
    const double target = spec.sigma * spec.sigma * std::pow(h, 2 * spec.p + 1);
    Eigen::VectorXd xi(spec.dim);
    for (int i = 0; i < spec.dim; ++i) {
      const double lam = method.ou_lambda[i];
      const double Sigma = integrated_ou_sigma_for(lam, h, target);
      xi[i] = std::sqrt(integrated_ou_variance(lam, Sigma, h)) * rng.gauss();
    }
    result.noise.end_increment = xi;
  } else {
    result.noise.end_increment = perturbation::draw_end_increment(spec, h, rng);
  }
  result.next = deterministic_step(method, f, u, h) + *result.noise.end_increment;
  return result;
}

namespace {

int mesh_step_count(double T, double h) {
  const double ratio = T / h;
  const double rounded = std::round(ratio);
  if (!(rounded >= 1.0) || std::abs(ratio - rounded) > 1e-9) {
    throw std::invalid_argument("T/h must be an integer: fixed uniform mesh required");
  }
  return static_cast<int>(rounded);
}

}  // namespace

TrajectorySample solve(const ODEProblem& problem, const OneStepMethod& method,
                       const perturbation::PerturbationSpec& spec, double h,
                       const RngStream& rng) {
  problem.validate();
  spec.validate();
  if (spec.dim != problem.dim()) {
    throw std::invalid_argument("perturbation dimension does not match the problem");
  }
  if (!(h > 0.0)) throw std::invalid_argument("step length h must be positive");
  const int K = mesh_step_count(problem.T, h);

  TrajectorySample sample;
  sample.h = h;
  sample.f = problem.f;
  sample.times.reserve(K + 1);
  sample.states.reserve(K + 1);
  sample.noise.reserve(K);
  sample.times.push_back(0.0);
  sample.states.push_back(problem.u0);
  for (int k = 0; k < K; ++k) {
    RngStream step_rng = rng.child(static_cast<std::uint64_t>(k));
    StepResult step = probabilistic_step(method, spec, problem.f, sample.states.back(), h, step_rng);
    sample.times.push_back(static_cast<double>(k + 1) * h);
    sample.states.push_back(std::move(step.next));
    sample.noise.push_back(std::move(step.noise));
  }
  return sample;
}

TrajectorySample solve_deterministic(const ODEProblem& problem, const OneStepMethod& method,
                                     double h) {
  perturbation::PerturbationSpec zero{1, 0.0, problem.dim()};
  return solve(problem, method, zero, h, RngStream(0));
}

State interpolate(TrajectorySample& sample, const OneStepMethod& method,
                  const perturbation::PerturbationSpec& spec, double s, RngStream& rng) {
  if (sample.states.empty()) throw std::invalid_argument("empty trajectory");
  const double T = sample.times.back();
  if (!(s >= 0.0 && s <= T)) {
    throw std::invalid_argument("interpolation time outside [0, T]");
  }
  const int K = static_cast<int>(sample.noise.size());
  int k = std::min(K - 1, static_cast<int>(std::floor(s / sample.h)));
  if (k < 0) k = 0;
  // Mesh points return stored states exactly.
  if (s == sample.times[k]) return sample.states[k];
  if (s == sample.times[k + 1]) return sample.states[k + 1];

  const double local = s - sample.times[k];
  State base = deterministic_step(method, sample.f, sample.states[k], local);
  State xi = perturbation::draw_interior_increment(sample.noise[k], spec, local, rng);
  return base + xi;
}

void write_trajectory_csv(const TrajectorySample& sample, const std::filesystem::path& path) {
  const int n = sample.states.empty() ? 0 : static_cast<int>(sample.states.front().size());
  std::vector<std::string> header;
  header.emplace_back("t");
  for (int i = 1; i <= n; ++i) header.push_back("u_" + std::to_string(i));

  io::CsvWriter csv(path);
  csv.write_header(header);
  for (std::size_t k = 0; k < sample.times.size(); ++k) {
    // Row assembled cell by cell since the state dimension is dynamic.
    std::string row = io::format_double(sample.times[k]);
    for (int i = 0; i < n; ++i) row += "," + io::format_double(sample.states[k][i]);
    csv.write_row(row);
  }
}

}  // namespace probode::ode
