#include <algorithm>
#include <vector>

#include <benchmark/benchmark.h>

#include "qpt/analysis.hpp"
#include "qpt/bursts.hpp"
#include "qpt/discrimination.hpp"
#include "qpt/rng.hpp"
#include "qpt/spectro_fit.hpp"

namespace {

std::vector<double> poisson_events(double rate, double t_end, std::uint64_t seed) {
  qpt::Rng r(seed);
  std::vector<double> ev;
  double t = 0.0;
  while ((t += r.exponential(1.0 / rate)) < t_end) ev.push_back(t);
  return ev;
}

const qpt::Simulator& reference_sim() {
  static const qpt::Simulator sim = [] {
    qpt::SimConfig c = qpt::reference_sim_config();
    c.duration = 60.0;
    return qpt::Simulator(c);
  }();
  return sim;
}

}  // namespace

static void BM_KdeActivity(benchmark::State& state) {
  const auto ev = poisson_events(static_cast<double>(state.range(0)), 60.0, 1);
  std::vector<double> grid(60000);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = 1e-3 * static_cast<double>(i);
  for (auto _ : state) benchmark::DoNotOptimize(qpt::kde_activity(ev, 0.020, grid));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(ev.size()));
}
BENCHMARK(BM_KdeActivity)->Arg(5)->Arg(50)->Arg(500);

static void BM_FitGmm(benchmark::State& state) {
  qpt::Rng r(2);
  std::vector<double> x(static_cast<std::size_t>(state.range(0)));
  for (auto& v : x) v = (r.uniform() < 0.5 ? 0.0 : 1.0) + 0.12 * r.normal();
  for (auto _ : state) benchmark::DoNotOptimize(qpt::fit_gmm(x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FitGmm)->Arg(10000)->Arg(60000)->Arg(600000)->Unit(benchmark::kMillisecond);

static void BM_RenderTrace(benchmark::State& state) {
  const auto& sim = reference_sim();
  for (auto _ : state) benchmark::DoNotOptimize(sim.render_trace(1, 0));
}
BENCHMARK(BM_RenderTrace)->Unit(benchmark::kMillisecond);

static void BM_AnalyzeTrace(benchmark::State& state) {
  const auto trace = reference_sim().render_trace(1, 0);
  const qpt::AnalysisOptions options;
  for (auto _ : state) benchmark::DoNotOptimize(qpt::analyze_trace(trace, options));
}
BENCHMARK(BM_AnalyzeTrace)->Unit(benchmark::kMillisecond);

static void BM_SpectroFit(benchmark::State& state) {
  const auto& sim = reference_sim();
  const auto sweep = sim.render_spectroscopy(1, 0);
  const auto prior = sim.config().detectors[0].spec;
  for (auto _ : state) benchmark::DoNotOptimize(qpt::spectro_fit(sweep, prior));
}
BENCHMARK(BM_SpectroFit)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
