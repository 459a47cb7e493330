// Serial reference vs OpenMP kernels: coincidence sweep and ensemble moments.

#include <benchmark/benchmark.h>
#include <omp.h>

#include <random>
#include <vector>

#include "fluoro/correlator.hpp"
#include "fluoro/ensemble.hpp"
#include "fluoro/units.hpp"

namespace {

using namespace fluoro;

std::vector<std::uint64_t> poisson_times(std::size_t n, double rate, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> gap(rate);
  std::vector<std::uint64_t> t(n);
  double now = 0.0;
  for (auto& v : t) {
    now += gap(rng);
    v = static_cast<std::uint64_t>(now * 1e12);
  }
  return t;
}

struct Streams {
  std::vector<std::uint64_t> ch0, ch1;
  Streams() : ch0(poisson_times(1'000'000, 1e5, 1)), ch1(poisson_times(1'000'000, 1e5, 2)) {}
};

const Streams& streams() {
  static const Streams s;
  return s;
}

CorrelateOptions options() {
  CorrelateOptions o;
  o.bin_width_ps = 1000;
  o.window_ps = 1'000'000;
  return o;
}

void BM_CorrelateSerial(benchmark::State& state) {
  const auto& s = streams();
  for (auto _ : state) benchmark::DoNotOptimize(reference::cross_correlate(s.ch0, s.ch1, options()));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.ch0.size() + s.ch1.size()));
}

void BM_CorrelateParallel(benchmark::State& state) {
  const auto& s = streams();
  omp_set_num_threads(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(cross_correlate(s.ch0, s.ch1, options()));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.ch0.size() + s.ch1.size()));
}

struct EnsembleCase {
  TrapParams trap;
  AtomDriveParams drive = AtomDriveParams::from_rabi(units::kDefaultGamma, units::mhz_to_angular(-16.3),
                                                     units::mhz_to_angular(10.0));
  PositionSet set;
  std::vector<double> taus;
  EnsembleCase() {
    trap.stark_max = units::mhz_to_angular(50.0);
    set = thermal_quadrature(trap, 144e-6, 48, 48);
    for (int k = 0; k < 400; ++k) taus.push_back(k * 0.5e-9);
  }
};

const EnsembleCase& ensemble_case() {
  static const EnsembleCase c;
  return c;
}

void BM_MomentsSerial(benchmark::State& state) {
  const auto& c = ensemble_case();
  for (auto _ : state) benchmark::DoNotOptimize(reference::position_moments(c.set, c.trap, c.drive, c.taus));
}

void BM_MomentsParallel(benchmark::State& state) {
  const auto& c = ensemble_case();
  omp_set_num_threads(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(position_moments(c.set, c.trap, c.drive, c.taus));
}

}  // namespace

BENCHMARK(BM_CorrelateSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CorrelateParallel)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MomentsSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MomentsParallel)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
