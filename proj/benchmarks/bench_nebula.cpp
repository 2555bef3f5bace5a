#include <benchmark/benchmark.h>

#include <numeric>

#include "nebula/encoder.hpp"
#include "nebula/fusion.hpp"
#include "nebula/novelty.hpp"
#include "nebula/scenarios.hpp"
#include "nebula/windowing.hpp"

namespace {

using namespace nebula;

std::vector<Event> stream(double hours) {
  ScenarioConfig cfg;
  cfg.duration_ms = static_cast<std::int64_t>(hours * 3'600'000);
  return generate(cfg).events;
}

// The busiest window of a one-hour stream.
BuiltWindow busiest_window() {
  const auto events = stream(1.0);
  auto windows = build_all_windows(events, WindowConfig{});
  return *std::max_element(windows.begin(), windows.end(), [](const BuiltWindow& a, const BuiltWindow& b) {
    return a.graph.num_edges() < b.graph.num_edges();
  });
}

void BM_Forward(benchmark::State& state) {
  const auto bw = busiest_window();
  const auto w = ModelWeights::init(static_cast<std::uint32_t>(state.range(0)), 32, 1, 0);
  std::vector<std::size_t> edges(bw.graph.num_edges());
  std::iota(edges.begin(), edges.end(), 0);
  for (auto _ : state) benchmark::DoNotOptimize(forward(bw.graph, w, edges));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(edges.size()));
}
BENCHMARK(BM_Forward)->Arg(16)->Arg(32)->Arg(64);

void BM_ScoreWindow(benchmark::State& state) {
  const auto bw = busiest_window();
  const auto w = ModelWeights::init(32, 32, 1);
  const Scorer scorer{Profile::standard, &w, nullptr};
  const Allowlist allow = generator_allowlist();
  for (auto _ : state) {
    ScoringState st;
    benchmark::DoNotOptimize(score_window(bw.graph, bw.summaries, st, allow, scorer, ScoringConfig{}));
  }
}
BENCHMARK(BM_ScoreWindow);

void BM_CmsUpdate(benchmark::State& state) {
  CountMinSketch s;
  std::vector<std::string> keys;
  for (int i = 0; i < 4096; ++i) keys.push_back("tool|invoke|remote#" + std::to_string(i));
  std::size_t i = 0;
  for (auto _ : state) s.update(keys[i++ & 4095]);
  benchmark::DoNotOptimize(s.total());
}
BENCHMARK(BM_CmsUpdate);

void BM_CmsEstimate(benchmark::State& state) {
  CountMinSketch s;
  std::vector<std::string> keys;
  for (int i = 0; i < 4096; ++i) {
    keys.push_back("tool|invoke|remote#" + std::to_string(i));
    s.update(keys.back(), static_cast<std::uint64_t>(i));
  }
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(s.estimate(keys[i++ & 4095]));
}
BENCHMARK(BM_CmsEstimate);

void BM_BuildWindows(benchmark::State& state) {
  const auto events = stream(1.0);
  for (auto _ : state) benchmark::DoNotOptimize(build_all_windows(events, WindowConfig{}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(events.size()));
}
BENCHMARK(BM_BuildWindows)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
