#include "probode/ode.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "probode/problems.hpp"

namespace probode::ode {
namespace {

State scalar(double v) { return State::Constant(1, v); }

TEST(DeterministicStep, EulerLinear) {
  const VectorField f = [](const State& u) { return State(2.0 * u); };
  const State next = deterministic_step(OneStepMethod::euler(), f, scalar(1.0), 0.1);
  EXPECT_DOUBLE_EQ(next[0], 1.2);
}

TEST(DeterministicStep, RK4LinearIsDegreeFourTaylor) {
  const VectorField f = [](const State& u) { return State(u); };
  const State next = deterministic_step(OneStepMethod::rk4(), f, scalar(1.0), 0.1);
  const double expected = 1.0 + 0.1 + 0.01 / 2.0 + 0.001 / 6.0 + 0.0001 / 24.0;
  EXPECT_NEAR(next[0], expected, 1e-15);
}

TEST(DeterministicStep, IntegratedOUConstantField) {
  const VectorField f = [](const State& u) { return State(State::Ones(u.size())); };
  const OneStepMethod method = OneStepMethod::integrated_ou(Eigen::VectorXd::Ones(1));
  const State next = deterministic_step(method, f, scalar(0.0), 1.0);
  EXPECT_NEAR(next[0], 1.0 - std::exp(-1.0), 1e-15);
}

TEST(ProbabilisticStep, ZeroSigmaEqualsDeterministic) {
  const ODEProblem problem = problems::fitzhugh_nagumo(0.2, 0.2, 3.0, -1.0, 1.0, 10.0);
  const perturbation::PerturbationSpec spec{1, 0.0, 2};
  RngStream rng(5);
  for (const OneStepMethod& method :
       {OneStepMethod::euler(), OneStepMethod::rk4(),
        OneStepMethod::integrated_ou(Eigen::VectorXd::Constant(2, 2.0))}) {
    const State det = deterministic_step(method, problem.f, problem.u0, 0.1);
    const StepResult step = probabilistic_step(method, spec, problem.f, problem.u0, 0.1, rng);
    EXPECT_EQ(step.next[0], det[0]);
    EXPECT_EQ(step.next[1], det[1]);
  }
}

TEST(ProbabilisticStep, ZeroFieldGivesPureNoise) {
  const VectorField f = [](const State& u) { return State(State::Zero(u.size())); };
  const perturbation::PerturbationSpec spec{1, 1.0, 1};
  RngStream rng(6);
  const int n = 100000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const StepResult s = probabilistic_step(OneStepMethod::euler(), spec, f, scalar(3.0), 0.5, rng);
    sum += s.next[0];
    sum_sq += (s.next[0] - 3.0) * (s.next[0] - 3.0);
  }
  const double expected_var = std::pow(0.5, 3);
  EXPECT_NEAR(sum / n, 3.0, 3.0 * std::sqrt(expected_var / n));
  EXPECT_NEAR(sum_sq / n, expected_var, 3.0 * expected_var * std::sqrt(2.0 / n));
}

TEST(ProbabilisticStep, PerturbationIsZeroMeanOnFitzHughNagumo) {
  const ODEProblem problem = problems::fitzhugh_nagumo(0.2, 0.2, 3.0, -1.0, 1.0, 10.0);
  const perturbation::PerturbationSpec spec{1, 0.1, 2};
  const double h = 0.1;
  const State det = deterministic_step(OneStepMethod::euler(), problem.f, problem.u0, h);
  RngStream rng(7);
  const int n = 100000;
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  for (int i = 0; i < n; ++i) {
    const StepResult s =
        probabilistic_step(OneStepMethod::euler(), spec, problem.f, problem.u0, h, rng);
    sum += s.next;
  }
  const double se = 0.1 * std::pow(h, 1.5) / std::sqrt(static_cast<double>(n));
  EXPECT_NEAR(sum[0] / n, det[0], 3.0 * se);
  EXPECT_NEAR(sum[1] / n, det[1], 3.0 * se);
}

TEST(ProbabilisticStep, IntegratedOUEndVarianceMatchesTarget) {
  const VectorField f = [](const State& u) { return State(State::Zero(u.size())); };
  const OneStepMethod method = OneStepMethod::integrated_ou(Eigen::VectorXd::Constant(1, 2.0));
  const perturbation::PerturbationSpec spec{1, 0.3, 1};
  const double h = 0.5;
  RngStream rng(8);
  const int n = 100000;
  double sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const StepResult s = probabilistic_step(method, spec, f, scalar(0.0), h, rng);
    sum_sq += s.next[0] * s.next[0];
  }
  const double target = 0.09 * std::pow(h, 3);
  EXPECT_NEAR(sum_sq / n, target, 3.0 * target * std::sqrt(2.0 / n));
}

// The closed-form integrated-OU variance, checked against an Euler-Maruyama
// simulation of the underlying fluctuation SDE.
TEST(IntegratedOU, VarianceFormulaMatchesEulerMaruyama) {
  const double lambda = 2.0, Sigma = 1.3, h = 0.5;
  const int n_steps = 2000, n_reps = 20000;
  const double dt = h / n_steps;
  RngStream rng(9);
  double sum_sq = 0.0, sum_4 = 0.0;
  for (int r = 0; r < n_reps; ++r) {
    double chi = 0.0, xi = 0.0;
    for (int j = 0; j < n_steps; ++j) {
      xi += chi * dt;
      chi += -lambda * chi * dt + std::sqrt(2.0 * Sigma * dt) * rng.gauss();
    }
    sum_sq += xi * xi;
    sum_4 += xi * xi * xi * xi;
  }
  const double mc_var = sum_sq / n_reps;
  const double mc_se = std::sqrt((sum_4 / n_reps - mc_var * mc_var) / n_reps);
  const double exact = integrated_ou_variance(lambda, Sigma, h);
  // 3 MC standard errors plus a 0.2% allowance for the discretization bias.
  EXPECT_NEAR(mc_var, exact, 3.0 * mc_se + 0.002 * exact);
}

TEST(IntegratedOU, SeriesBranchMatchesClosedForm) {
  // Inside the small-argument branch the series must agree with the direct
  // formula evaluated at the same point.
  const double lambda = 1.0, Sigma = 0.7;
  for (double t : {0.05, 0.2, 0.499}) {
    const double x = lambda * t;
    const double direct = 2.0 * Sigma / (lambda * lambda) *
                          (t - 2.0 * (1.0 - std::exp(-x)) / lambda +
                           (1.0 - std::exp(-2.0 * x)) / (2.0 * lambda));
    EXPECT_NEAR(integrated_ou_variance(lambda, Sigma, t), direct, 1e-10 * direct);
  }
}

TEST(IntegratedOU, SigmaForHitsTarget) {
  const double lambda = 3.0, h = 0.25, target = 1.7e-4;
  const double Sigma = integrated_ou_sigma_for(lambda, h, target);
  EXPECT_NEAR(integrated_ou_variance(lambda, Sigma, h), target, 1e-12 * target);
}

TEST(Solve, RejectsNonDivisibleMesh) {
  const ODEProblem problem = problems::linear(1.0, 1.0, 1.0);
  const perturbation::PerturbationSpec spec{1, 0.0, 1};
  EXPECT_THROW(solve(problem, OneStepMethod::euler(), spec, 0.3, RngStream(1)),
               std::invalid_argument);
}

TEST(Solve, DeterministicLinearRecursion) {
  const ODEProblem problem = problems::linear(2.0, 1.5, 1.0);
  const TrajectorySample traj = solve_deterministic(problem, OneStepMethod::euler(), 0.1);
  ASSERT_EQ(traj.states.size(), 11u);
  double expected = 1.5;
  for (int k = 0; k < 10; ++k) expected *= 1.2;
  EXPECT_NEAR(traj.states.back()[0], expected, 1e-12 * expected);
  EXPECT_EQ(traj.states.front()[0], 1.5);
}

TEST(Solve, LinearVarianceMatchesClosedForm) {
  // Var(U_K) = sigma^2 h^3 sum_j (1+lambda h)^{2j}.
  const double lambda = 1.0, h = 0.1, sigma = 0.2;
  const ODEProblem problem = problems::linear(lambda, 1.0, 1.0);
  const perturbation::PerturbationSpec spec{1, sigma, 1};
  const RngStream root(10);
  const int n = 100000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const TrajectorySample traj =
        solve(problem, OneStepMethod::euler(), spec, h, root.child(i));
    sum += traj.states.back()[0];
  }
  const double mean = sum / n;
  const RngStream root2(10);
  for (int i = 0; i < n; ++i) {
    const TrajectorySample traj =
        solve(problem, OneStepMethod::euler(), spec, h, root2.child(i));
    const double d = traj.states.back()[0] - mean;
    sum_sq += d * d;
  }
  double growth_sum = 0.0;
  for (int j = 0; j < 10; ++j) growth_sum += std::pow(1.1, 2 * j);
  const double expected_var = sigma * sigma * std::pow(h, 3) * growth_sum;
  EXPECT_NEAR(sum_sq / (n - 1), expected_var, 3.0 * expected_var * std::sqrt(2.0 / n));
  EXPECT_NEAR(mean, std::pow(1.1, 10), 3.0 * std::sqrt(expected_var / n));
}

TEST(Solve, ReproducibleFromSeed) {
  const ODEProblem problem = problems::fitzhugh_nagumo(0.2, 0.2, 3.0, -1.0, 1.0, 2.0);
  const perturbation::PerturbationSpec spec{1, 0.1, 2};
  const TrajectorySample a = solve(problem, OneStepMethod::euler(), spec, 0.1, RngStream(77));
  const TrajectorySample b = solve(problem, OneStepMethod::euler(), spec, 0.1, RngStream(77));
  for (std::size_t k = 0; k < a.states.size(); ++k) {
    ASSERT_EQ(a.states[k][0], b.states[k][0]);
    ASSERT_EQ(a.states[k][1], b.states[k][1]);
  }
}

TEST(Interpolate, MeshPointsReturnStoredStates) {
  const ODEProblem problem = problems::fitzhugh_nagumo(0.2, 0.2, 3.0, -1.0, 1.0, 2.0);
  const perturbation::PerturbationSpec spec{1, 0.3, 2};
  TrajectorySample traj = solve(problem, OneStepMethod::euler(), spec, 0.1, RngStream(11));
  RngStream rng(12);
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    const State u = interpolate(traj, OneStepMethod::euler(), spec, traj.times[k], rng);
    EXPECT_EQ(u[0], traj.states[k][0]);
    EXPECT_EQ(u[1], traj.states[k][1]);
  }
}

TEST(Interpolate, ZeroSigmaGivesDeterministicInterpolant) {
  const ODEProblem problem = problems::linear(2.0, 1.0, 1.0);
  const perturbation::PerturbationSpec spec{1, 0.0, 1};
  TrajectorySample traj = solve(problem, OneStepMethod::euler(), spec, 0.1, RngStream(13));
  RngStream rng(14);
  const double s = 0.234;
  const State u = interpolate(traj, OneStepMethod::euler(), spec, s, rng);
  const State base = traj.states[2];
  const double expected = base[0] + (s - 0.2) * 2.0 * base[0];
  EXPECT_NEAR(u[0], expected, 1e-15);
}

TEST(Interpolate, BridgeVarianceGivenRecordedEnd) {
  // f == 0, end increment forced to zero: interior variance is the bridge
  // value s(h-s)/h.
  const VectorField f = [](const State& u) { return State(State::Zero(u.size())); };
  const ODEProblem problem{f, scalar(0.0), 1.0};
  const perturbation::PerturbationSpec spec{1, 1.0, 1};
  RngStream rng(15);
  const int n = 100000;
  double sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    TrajectorySample traj;
    traj.h = 1.0;
    traj.f = f;
    traj.times = {0.0, 1.0};
    traj.states = {scalar(0.0), scalar(0.0)};
    traj.noise.push_back(perturbation::StepNoiseState{1.0, Eigen::VectorXd::Zero(1), {}});
    const State u = interpolate(traj, OneStepMethod::euler(), spec, 0.5, rng);
    sum_sq += u[0] * u[0];
  }
  EXPECT_NEAR(sum_sq / n, 0.25, 3.0 * 0.25 * std::sqrt(2.0 / n));
}

TEST(Interpolate, RejectsOutOfRange) {
  const ODEProblem problem = problems::linear(1.0, 1.0, 1.0);
  const perturbation::PerturbationSpec spec{1, 0.0, 1};
  TrajectorySample traj = solve(problem, OneStepMethod::euler(), spec, 0.1, RngStream(16));
  RngStream rng(17);
  EXPECT_THROW(interpolate(traj, OneStepMethod::euler(), spec, -0.1, rng), std::invalid_argument);
  EXPECT_THROW(interpolate(traj, OneStepMethod::euler(), spec, 1.1, rng), std::invalid_argument);
}

TEST(TrajectoryCsv, HeaderAndPrecision) {
  const ODEProblem problem = problems::linear(1.0, 1.0 / 3.0, 1.0);
  const TrajectorySample traj = solve_deterministic(problem, OneStepMethod::euler(), 0.5);
  const std::filesystem::path path = std::filesystem::temp_directory_path() / "probode_traj.csv";
  write_trajectory_csv(traj, path);
  std::ifstream in(path);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_EQ(header, "t,u_1");
  // 17-significant-digit round trip of 1/3.
  EXPECT_EQ(first, "0,0.33333333333333331");
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace probode::ode
