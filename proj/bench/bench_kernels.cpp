/// Serial reference kernels against their OpenMP counterparts on a tensor of
/// the default snapshot size (101 x 550 x 50).
///
/// Run with e.g. `cpsdre_bench --benchmark_filter=Mttkrp`. The thread count
/// follows OMP_NUM_THREADS.

#include "cpsdre/kernels.hpp"
#include "cpsdre/rng.hpp"

#include <benchmark/benchmark.h>

#include <cstdint>
#include <map>

namespace {

using namespace cpsdre;

struct Problem {
  Tensor3 t;
  CpFactors f;
};

const Problem& problem(std::size_t rank) {
  static std::map<std::size_t, Problem> cache;
  auto it = cache.find(rank);
  if (it == cache.end()) {
    Pcg32 rng(1);
    Tensor3 t(101, 550, 50);
    for (std::size_t n = 0; n < t.size(); ++n) t.data()[n] = rng.uniform(-1.0, 1.0);
    CpFactors f = random_factors(rng, {101, 550, 50}, rank);
    it = cache.emplace(rank, Problem{std::move(t), std::move(f)}).first;
  }
  return it->second;
}

template <bool Parallel>
void Mttkrp(benchmark::State& state) {
  const Problem& p = problem(static_cast<std::size_t>(state.range(1)));
  const int mode = static_cast<int>(state.range(0));
  for (auto _ : state) {
    Matrix m = Parallel ? kernels::parallel::mttkrp(p.t, p.f.X, p.f.Y, p.f.Z, mode)
                        : kernels::serial::mttkrp(p.t, p.f.X, p.f.Y, p.f.Z, mode);
    benchmark::DoNotOptimize(m.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * p.t.size()));
}

template <bool Parallel>
void Reconstruct(benchmark::State& state) {
  const Problem& p = problem(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    Tensor3 t = Parallel ? kernels::parallel::reconstruct(p.f) : kernels::serial::reconstruct(p.f);
    benchmark::DoNotOptimize(t.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * p.t.size()));
}

template <bool Parallel>
void Residual(benchmark::State& state) {
  const Problem& p = problem(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    double r = Parallel ? kernels::parallel::residual_norm_sq(p.t, p.f) : kernels::serial::residual_norm_sq(p.t, p.f);
    benchmark::DoNotOptimize(r);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * p.t.size()));
}

void MttkrpArgs(benchmark::internal::Benchmark* b) {
  for (int mode = 1; mode <= 3; ++mode)
    for (int rank : {2, 10}) b->Args({mode, rank});
  b->ArgNames({"mode", "rank"})->Unit(benchmark::kMillisecond);
}

BENCHMARK_TEMPLATE(Mttkrp, false)->Name("Mttkrp/serial")->Apply(MttkrpArgs);
BENCHMARK_TEMPLATE(Mttkrp, true)->Name("Mttkrp/parallel")->Apply(MttkrpArgs);
BENCHMARK_TEMPLATE(Reconstruct, false)->Name("Reconstruct/serial")->Arg(2)->Arg(10)->Unit(benchmark::kMillisecond);
BENCHMARK_TEMPLATE(Reconstruct, true)->Name("Reconstruct/parallel")->Arg(2)->Arg(10)->Unit(benchmark::kMillisecond);
BENCHMARK_TEMPLATE(Residual, false)->Name("Residual/serial")->Arg(2)->Arg(10)->Unit(benchmark::kMillisecond);
BENCHMARK_TEMPLATE(Residual, true)->Name("Residual/parallel")->Arg(2)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
