#include <benchmark/benchmark.h>

#include <random>

#include "hrnet/analysis.hpp"
#include "hrnet/builder.hpp"
#include "hrnet/executor.hpp"
#include "hrnet/ops.hpp"
#include "hrnet/trainer.hpp"

namespace bm = benchmark;
using namespace hrnet;

namespace {

Tensor4 random_tensor(Shape4 shape, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Tensor4 t(shape);
  for (double& v : t.data()) v = dist(gen);
  return t;
}

}  // namespace

static void BM_Conv3x3(bm::State& st) {
  const int c = static_cast<int>(st.range(0));
  const int side = static_cast<int>(st.range(1));
  const auto spec = ops::ConvSpec::make(c, c, 3);
  const Tensor4 x = random_tensor(Shape4{1, c, side, side}, 1);
  const Tensor4 w = random_tensor(Shape4{c, c, 3, 3}, 2);
  for (auto _ : st) {
    Tensor4 y = ops::conv2d(x, spec, w);
    bm::DoNotOptimize(y.data().data());
  }
  st.counters["MAC/s"] = bm::Counter(9.0 * c * c * side * side, bm::Counter::kIsIterationInvariantRate);
}

static void BM_ToyForward(bm::State& st) {
  const Graph g = build(toy_config());
  const ParamStore ps = ParamStore::init(g, 0);
  const Tensor4 x = random_tensor(Shape4{static_cast<int>(st.range(0)), 3, 32, 32}, 3);
  const Tensor4 in[] = {x};
  for (auto _ : st) {
    auto out = run(g, ps, in);
    bm::DoNotOptimize(out.data());
  }
}

static void BM_ToyTrainStep(bm::State& st) {
  const Graph g = build(toy_config());
  ParamStore ps = ParamStore::init(g, 0);
  const SyntheticSet data = make_synthetic(SyntheticSpec{32, 32, 2.0, 4.0, 1});
  TrainOptions o;
  o.steps = 1;
  for (auto _ : st) {
    TrainResult r = train_toy(g, ps, data, o);
    bm::DoNotOptimize(r.trace.data());
  }
}

static void BM_BuildAndCountW48(bm::State& st) {
  ArchConfig c;
  c.width_c = 48;
  for (auto _ : st) {
    ComplexityReport r = count_flops(build(c), Shape4{1, 3, 256, 192});
    bm::DoNotOptimize(r.total.macs);
  }
}

BENCHMARK(BM_Conv3x3)->Args({32, 64})->Args({64, 32})->Args({128, 16})->Unit(bm::kMicrosecond);
BENCHMARK(BM_ToyForward)->Arg(1)->Arg(32)->Unit(bm::kMillisecond);
BENCHMARK(BM_ToyTrainStep)->Unit(bm::kMillisecond);
BENCHMARK(BM_BuildAndCountW48)->Unit(bm::kMillisecond);
BENCHMARK_MAIN();
