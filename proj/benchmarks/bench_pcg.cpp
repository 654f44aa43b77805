#include <benchmark/benchmark.h>

#include <gmmk/cg.hpp>

#include "bench_common.hpp"

using namespace gmmk;

static void BM_PcgSolve(benchmark::State& state) {
  auto inst = bench::crossed_instance(2000, state.range(1));
  const PrecondKind kind = static_cast<PrecondKind>(state.range(0));
  auto P = build_preconditioner(kind, inst.nm, inst.data.Z, inst.W, inst.sig_inv, 50, 3);
  RNG rng = make_rng(11);
  std::normal_distribution<double> ndist;
  vec_t b(inst.nm.dim());
  for (auto& v : b) v = ndist(rng);
  index_t iters = 0;
  for (auto _ : state) {
    CGResult res = pcg_solve(inst.nm, *P, b, 1e-2, 1000);
    iters = res.iterations;
    benchmark::DoNotOptimize(res.u);
  }
  state.counters["cg_iterations"] = static_cast<double>(iters);
}
BENCHMARK(BM_PcgSolve)
    ->ArgsProduct({{static_cast<long>(PrecondKind::SSOR),
                    static_cast<long>(PrecondKind::ZIC),
                    static_cast<long>(PrecondKind::Diagonal),
                    static_cast<long>(PrecondKind::None)},
                   {5, 20, 80}});

static void BM_BuildPreconditioner(benchmark::State& state) {
  auto inst = bench::crossed_instance(2000, 10);
  const PrecondKind kind = static_cast<PrecondKind>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        build_preconditioner(kind, inst.nm, inst.data.Z, inst.W, inst.sig_inv, 50, 3));
  }
}
BENCHMARK(BM_BuildPreconditioner)
    ->Arg(static_cast<long>(PrecondKind::SSOR))
    ->Arg(static_cast<long>(PrecondKind::ZIC))
    ->Arg(static_cast<long>(PrecondKind::Diagonal))
    ->Arg(static_cast<long>(PrecondKind::PivotedCholesky))
    ->Arg(static_cast<long>(PrecondKind::LanczosLowRank));
