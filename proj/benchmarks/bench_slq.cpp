#include <benchmark/benchmark.h>

#include <gmmk/slq.hpp>

#include "bench_common.hpp"

using namespace gmmk;

static void BM_SlqLogdet(benchmark::State& state) {
  auto inst = bench::crossed_instance(2000, 10);
  const PrecondKind kind = static_cast<PrecondKind>(state.range(0));
  const index_t t = state.range(1);
  auto P = build_preconditioner(kind, inst.nm, inst.data.Z, inst.W, inst.sig_inv, 50, 3);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    ProbeSet probes(t, ProbeKind::GaussianP, ++seed);
    benchmark::DoNotOptimize(slq_logdet(inst.nm, *P, probes, 1e-2, 1000));
  }
}
BENCHMARK(BM_SlqLogdet)
    ->ArgsProduct({{static_cast<long>(PrecondKind::SSOR),
                    static_cast<long>(PrecondKind::ZIC),
                    static_cast<long>(PrecondKind::Diagonal)},
                   {10, 50}});
