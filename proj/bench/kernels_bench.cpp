// Serial reference against the OpenMP kernels. Arg(0) is serial, Arg(1)
// parallel; set OMP_NUM_THREADS to control the team size.

#include "fareyesc/holes.hpp"
#include "fareyesc/operator.hpp"
#include "fareyesc/oracles.hpp"

#include <benchmark/benchmark.h>
#include <omp.h>

using namespace fareyesc;

namespace {

Execution mode(const benchmark::State& state) {
  return state.range(0) ? Execution::parallel : Execution::serial;
}

void label(benchmark::State& state) {
  state.SetLabel(state.range(0) ? "parallel x" + std::to_string(omp_get_max_threads()) : "serial");
}

void BM_ClosedMatrix(benchmark::State& state) {
  const BuildOptions opts{mode(state), false};
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_matrix(state.range(1), MatrixKind::closed, std::nullopt, {}, opts));
  }
  label(state);
}
BENCHMARK(BM_ClosedMatrix)->ArgsProduct({{0, 1}, {128, 256}})->Unit(benchmark::kMillisecond);

void BM_OpenMatrix(benchmark::State& state) {
  const BuildOptions opts{mode(state), false};
  const HoleParams hole(0.1, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_matrix(state.range(1), MatrixKind::open, hole, {}, opts));
  }
  label(state);
}
BENCHMARK(BM_OpenMatrix)->ArgsProduct({{0, 1}, {32, 64}})->Unit(benchmark::kMillisecond);

void BM_UlamAssembly(benchmark::State& state) {
  UlamConfig cfg;
  cfg.bins = 4096;
  cfg.hole = HoleParams(0.1, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ulam_matrix(cfg, mode(state)));
  label(state);
}
BENCHMARK(BM_UlamAssembly)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_MonteCarlo(benchmark::State& state) {
  McOptions o;
  o.samples = 200000;
  o.execution = mode(state);
  for (auto _ : state) benchmark::DoNotOptimize(mc_survival(MapKind::farey, IndicatorHole{0.1}, o));
  label(state);
}
BENCHMARK(BM_MonteCarlo)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
