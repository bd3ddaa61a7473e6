#include <random>

#include <benchmark/benchmark.h>

#include "mspde/ensemble.hpp"
#include "mspde/solver.hpp"

using namespace mspde;

namespace {

VectorField random_gradient(const GridPtr& g) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Field f(g);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = u(rng);
  return gradient(f);
}

void BM_YosidaFluxSerial(benchmark::State& state) {
  const GridPtr g = Grid::rect(1.0, 1.0, state.range(0), state.range(0));
  const VectorField d = random_gradient(g);
  const Potential p = cosh_potential(2);
  for (auto _ : state) benchmark::DoNotOptimize(yosida_flux_serial(p, 0.1, d));
  state.SetItemsProcessed(state.iterations() * (g->face_count(0) + g->face_count(1)));
}

void BM_YosidaFluxOpenMP(benchmark::State& state) {
  const GridPtr g = Grid::rect(1.0, 1.0, state.range(0), state.range(0));
  const VectorField d = random_gradient(g);
  const Potential p = cosh_potential(2);
  for (auto _ : state) benchmark::DoNotOptimize(yosida_flux(p, 0.1, d));
  state.SetItemsProcessed(state.iterations() * (g->face_count(0) + g->face_count(1)));
}

struct EnsembleFixture {
  GridPtr grid = Grid::line(1.0, 64);
  WienerConfig wiener = make_wiener(grid, 16, 7);
  DiffusionOperator b = DiffusionOperator::additive(wiener, DiffusionOperator::decay_weights(16, 1.1, 0.5));
  Potential p = p_power_potential(1, 3.0);
  SolverConfig cfg;
  Field u0 = wiener.basis[0];

  EnsembleFixture() {
    cfg.lambda = 0.1;
    cfg.tau = 5e-6;
    cfg.T = 2e-3;
  }

  double path(std::size_t k) const {
    auto noise = std::make_shared<const NoisePath>(sample_increments(wiener, cfg.steps(), cfg.tau, k));
    return norms(solve_additive(p, b, u0, cfg, noise).fields.back()).l2;
  }
};

void BM_EnsembleSerial(benchmark::State& state) {
  const EnsembleFixture fx;
  for (auto _ : state)
    benchmark::DoNotOptimize(run_paths_serial(state.range(0), [&](std::size_t k) { return fx.path(k); }));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_EnsembleOpenMP(benchmark::State& state) {
  const EnsembleFixture fx;
  for (auto _ : state)
    benchmark::DoNotOptimize(run_paths(state.range(0), [&](std::size_t k) { return fx.path(k); }, available_workers()));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_YosidaFluxSerial)->Arg(64)->Arg(256);
BENCHMARK(BM_YosidaFluxOpenMP)->Arg(64)->Arg(256);
BENCHMARK(BM_EnsembleSerial)->Arg(16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EnsembleOpenMP)->Arg(16)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
