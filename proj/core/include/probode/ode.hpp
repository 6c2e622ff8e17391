#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <vector>

#include "probode/perturbation.hpp"
#include "probode/rng.hpp"

namespace probode::ode {

using State = Eigen::VectorXd;
using VectorField = std::function<State(const State&)>;

// Autonomous initial-value problem du/dt = f(u), u(0) = u0, on [0, T].
struct ODEProblem {
  VectorField f;
  State u0;
  double T = 1.0;

  int dim() const { return static_cast<int>(u0.size()); }
  void validate() const;
};

enum class MethodKind { kEuler, kRK4, kIntegratedOU };

// Deterministic flow-map approximation Psi_h. deterministic_order() is the
// local-truncation-error order q: Euler 1, classical RK4 4, integrated
// Ornstein-Uhlenbeck map 1.
struct OneStepMethod {
  MethodKind kind = MethodKind::kEuler;
  Eigen::VectorXd ou_lambda;  // diagonal relaxation rates; IntegratedOU only

  int deterministic_order() const;
  void validate(int dim) const;

  static OneStepMethod euler() { return {MethodKind::kEuler, {}}; }
  static OneStepMethod rk4() { return {MethodKind::kRK4, {}}; }
  static OneStepMethod integrated_ou(Eigen::VectorXd lambda) {
    return {MethodKind::kIntegratedOU, std::move(lambda)};
  }
};

State deterministic_step(const OneStepMethod& method, const VectorField& f, const State& u,
                         double h);

struct StepResult {
  State next;
  perturbation::StepNoiseState noise;
};

// One randomized step Psi_h(u) + xi(h). For Euler/RK4 the increment comes
// from the generic perturbation family. For the integrated OU method it is
// drawn from the exact law of the integrated OU fluctuation, with the driving
// strength scaled so Var(xi(h)) = sigma^2 h^{2p+1} exactly.
StepResult probabilistic_step(const OneStepMethod& method, const perturbation::PerturbationSpec& spec,
                              const VectorField& f, const State& u, double h, RngStream& rng);

// One random solver realization on the uniform mesh t_k = k h, with the
// per-step noise records kept so off-grid queries stay consistent.
struct TrajectorySample {
  double h = 0.0;
  std::vector<double> times;                        // K+1 entries
  std::vector<State> states;                        // K+1 entries, states[0] = u0
  std::vector<perturbation::StepNoiseState> noise;  // K entries
  VectorField f;                                    // field used by the interpolant
};

// Iterates probabilistic_step K = T/h times. Step k draws from the substream
// rng.child(k), so a trajectory is reproducible from (seed, k). Requires T/h
// to be an integer to within 1e-9.
TrajectorySample solve(const ODEProblem& problem, const OneStepMethod& method,
                       const perturbation::PerturbationSpec& spec, double h, const RngStream& rng);

// sigma = 0 path without a stream; bitwise equal to solve() at sigma = 0.
TrajectorySample solve_deterministic(const ODEProblem& problem, const OneStepMethod& method,
                                     double h);

// Off-grid evaluation: for s in [t_k, t_{k+1}) returns Psi_{s-t_k}(U_k) plus
// an interior noise value conditioned on the step's recorded draws. Mesh
// points return stored states exactly. Queries within one step must come in
// increasing time order.
State interpolate(TrajectorySample& sample, const OneStepMethod& method,
                  const perturbation::PerturbationSpec& spec, double s, RngStream& rng);

// Header `t,u_1,...,u_n`, one row per mesh point, 17 significant digits.
void write_trajectory_csv(const TrajectorySample& sample, const std::filesystem::path& path);

// Exact variance of xi(t) = int_0^t chi, where chi is the OU fluctuation
// d chi = -lambda chi dt + sqrt(2 Sigma) dW, chi(0) = 0:
//   Var(xi(t)) = (2 Sigma / lambda^2) (t - 2(1-e^{-lt})/l + (1-e^{-2lt})/(2l)).
double integrated_ou_variance(double lambda, double Sigma, double t);

// Sigma such that integrated_ou_variance(lambda, Sigma, h) == target.
double integrated_ou_sigma_for(double lambda, double h, double target);

}  // namespace probode::ode
