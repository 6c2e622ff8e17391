#include <benchmark/benchmark.h>

#include "probode/fem1d.hpp"

namespace {

using namespace probode;

void BM_AssembleDeterministic(benchmark::State& state) {
  const fem1d::Mesh1D mesh = fem1d::Mesh1D::with_elements(static_cast<int>(state.range(0)));
  const fem1d::CoefficientField kappa;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fem1d::assemble_deterministic(mesh, kappa));
  }
}
BENCHMARK(BM_AssembleDeterministic)->Arg(80)->Arg(800);

void BM_AssembleRandomized(benchmark::State& state) {
  const fem1d::Mesh1D mesh = fem1d::Mesh1D::with_elements(static_cast<int>(state.range(0)));
  const fem1d::CoefficientField kappa;
  const fem1d::RandomBasisSpec spec{1, 1.0, 20};
  const RngStream root(3);
  std::uint64_t k = 0;
  for (auto _ : state) {
    RngStream rng = root.child(k++);
    benchmark::DoNotOptimize(fem1d::assemble_randomized(mesh, kappa, spec, rng));
  }
}
BENCHMARK(BM_AssembleRandomized)->Arg(80);

void BM_SolveSystem(benchmark::State& state) {
  const fem1d::Mesh1D mesh = fem1d::Mesh1D::with_elements(static_cast<int>(state.range(0)));
  const fem1d::CoefficientField kappa;
  const fem1d::Fem1DSystem sys = fem1d::assemble_deterministic(mesh, kappa);
  for (auto _ : state) {
    benchmark::DoNotOptimize(fem1d::solve_system(sys));
  }
}
BENCHMARK(BM_SolveSystem)->Arg(80)->Arg(800);

}  // namespace
