#include <benchmark/benchmark.h>

#include "bench_common.hpp"

using namespace gmmk;

static void BM_NormalMatvec(benchmark::State& state) {
  auto inst = bench::crossed_instance(state.range(0), 10);
  RNG rng = make_rng(5);
  std::normal_distribution<double> ndist;
  vec_t x(inst.nm.dim());
  for (auto& v : x) v = ndist(rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(inst.nm.matvec(x));
  }
  state.SetItemsProcessed(state.iterations() * inst.nm.M.mat.nonZeros());
}
BENCHMARK(BM_NormalMatvec)->Arg(1000)->Arg(5000)->Arg(20000);

static void BM_IncidenceMatvec(benchmark::State& state) {
  auto inst = bench::crossed_instance(state.range(0), 10);
  RNG rng = make_rng(7);
  std::normal_distribution<double> ndist;
  vec_t x(inst.data.Z.cols());
  for (auto& v : x) v = ndist(rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(inst.data.Z.mult(x));
  }
}
BENCHMARK(BM_IncidenceMatvec)->Arg(1000)->Arg(5000)->Arg(20000);

static void BM_Assembly(benchmark::State& state) {
  auto inst = bench::crossed_instance(state.range(0), 10);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        assemble_normal_matrix(inst.data.Z, inst.W, inst.sig_inv));
  }
}
BENCHMARK(BM_Assembly)->Arg(1000)->Arg(5000)->Arg(20000);
