#include <benchmark/benchmark.h>

#include "flowlab/flow.hpp"
#include "flowlab/lpf.hpp"
#include "flowlab/pliss.hpp"
#include "flowlab/srb.hpp"

using namespace flowlab;

namespace {

Vec v3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

const SystemSpec& lorenz() {
  static const SystemSpec sys = make_system("lorenz");
  return sys;
}

Vec settled() {
  IntegratorConfig cfg;
  static const Vec x = advance(lorenz(), v3(1, 1, 1), 20.0, cfg);
  return x;
}

void bm_advance(benchmark::State& state) {
  IntegratorConfig cfg;
  const Vec x = settled();
  const double t = static_cast<double>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(advance(lorenz(), x, t, cfg));
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<long>(t / cfg.step));
}
BENCHMARK(bm_advance)->Arg(1)->Arg(10);

void bm_tangent_advance(benchmark::State& state) {
  IntegratorConfig cfg;
  const Vec x = settled();
  const Mat frame = Mat::Identity(3, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(tangent_advance(lorenz(), x, frame, 1.0, cfg));
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<long>(1.0 / cfg.step));
}
BENCHMARK(bm_tangent_advance);

void bm_trace_step(benchmark::State& state) {
  IntegratorConfig cfg;
  const Vec x = settled();
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(cocycle_trace(lorenz(), x, n, 0.01, cfg));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(bm_trace_step)->Arg(20);

void bm_pliss_scan(benchmark::State& state) {
  IntegratorConfig cfg;
  const CocycleTrace trace =
      cocycle_trace(lorenz(), settled(), static_cast<int>(state.range(0)),
                    0.01, cfg);
  HyperbolicTimeConfig hc;
  hc.c0 = 0.1;
  hc.lip_bound = lorenz().lip_bound;
  for (auto _ : state) {
    benchmark::DoNotOptimize(hyperbolic_times(trace, hc));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_pliss_scan)->Arg(100)->Arg(400);

void bm_histogram(benchmark::State& state) {
  IntegratorConfig cfg;
  const Vec x = settled();
  const double t = static_cast<double>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(empirical_measure(lorenz(), x, t, 64, cfg));
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<long>(t / cfg.step));
}
BENCHMARK(bm_histogram)->Arg(5);

}  // namespace

BENCHMARK_MAIN();
