#include "gdmd/gdmd.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace gdmd;

namespace {

Mat gaussian(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Mat m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = nd(rng);
  return m;
}

BoldSeries series(int n, int t) {
  BoldSeries x;
  x.data = gaussian(n, t, 1);
  x.dt = 0.72;
  x.roi_labels = BoldSeries::default_labels(n);
  return x;
}

void BM_ExactDmd(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const Mat snaps = gaussian(d, 64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(exact_dmd(snaps, RankPolicy::energy(), 1.0));
  state.SetComplexityN(d);
}
BENCHMARK(BM_ExactDmd)->RangeMultiplier(4)->Range(64, 4096)->Complexity();

void BM_SlidingWindow(benchmark::State& state) {
  const BoldSeries x = series(static_cast<int>(state.range(0)), 400);
  for (auto _ : state) benchmark::DoNotOptimize(sliding_window_correlation(x, WindowSpec{30, 1}));
}
BENCHMARK(BM_SlidingWindow)->Arg(16)->Arg(64)->Arg(100);

void BM_GraphDmd(benchmark::State& state) {
  const BoldSeries x = series(static_cast<int>(state.range(0)), 120);
  const GraphSequence gs = sliding_window_correlation(x, WindowSpec{30, 1});
  for (auto _ : state) benchmark::DoNotOptimize(graph_dmd(gs));
}
BENCHMARK(BM_GraphDmd)->Arg(16)->Arg(32)->Arg(64);

void BM_WindowedGraphDmd(benchmark::State& state) {
  const BoldSeries x = series(32, 400);
  const GraphSequence gs = sliding_window_correlation(x, WindowSpec{30, 1});
  for (auto _ : state) benchmark::DoNotOptimize(windowed_graph_dmd(gs));
}
BENCHMARK(BM_WindowedGraphDmd);

void BM_TotalLoss(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const BoldSeries x = series(n, 30 * 20);
  const WindowBatch batch = WindowBatch::from_series(x, WindowSpec{30, 30});
  const KoopmanModel model = KoopmanModel::create(30, {64, 32}, 16, 3);
  const TrainConfig cfg;
  Vec grad;
  for (auto _ : state) benchmark::DoNotOptimize(total_loss(model, batch, cfg, &grad));
}
BENCHMARK(BM_TotalLoss)->Arg(8)->Arg(32);

void BM_ElasticNet(benchmark::State& state) {
  const Mat x = gaussian(100, static_cast<int>(state.range(0)), 4);
  const Vec y = x.col(0) + gaussian(100, 1, 5).col(0);
  for (auto _ : state) benchmark::DoNotOptimize(elastic_net_fit(x, y, 0.05, 0.5));
}
BENCHMARK(BM_ElasticNet)->Arg(20)->Arg(80);

}  // namespace

BENCHMARK_MAIN();
