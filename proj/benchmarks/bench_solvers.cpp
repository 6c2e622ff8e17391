#include <benchmark/benchmark.h>

#include "probode/ode.hpp"
#include "probode/perturbation.hpp"
#include "probode/problems.hpp"

namespace {

using namespace probode;

void BM_EndIncrement(benchmark::State& state) {
  const perturbation::PerturbationSpec spec{1, 0.1, 2};
  RngStream rng(1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(perturbation::draw_end_increment(spec, 0.1, rng));
  }
}
BENCHMARK(BM_EndIncrement);

void BM_DeterministicStepRK4(benchmark::State& state) {
  const ode::ODEProblem problem = problems::fitzhugh_nagumo(0.2, 0.2, 3.0, -1.0, 1.0, 20.0);
  const ode::OneStepMethod method = ode::OneStepMethod::rk4();
  ode::State u = problem.u0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ode::deterministic_step(method, problem.f, u, 0.1));
  }
}
BENCHMARK(BM_DeterministicStepRK4);

void BM_SolveRandomizedEuler(benchmark::State& state) {
  const ode::ODEProblem problem = problems::fitzhugh_nagumo(0.2, 0.2, 3.0, -1.0, 1.0, 20.0);
  const ode::OneStepMethod method = ode::OneStepMethod::euler();
  const perturbation::PerturbationSpec spec{1, 0.1, 2};
  const double h = 1.0 / state.range(0);
  const RngStream rng(7);
  std::uint64_t k = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ode::solve(problem, method, spec, h, rng.child(k++)));
  }
}
BENCHMARK(BM_SolveRandomizedEuler)->Arg(10)->Arg(100);

}  // namespace
