#include <benchmark/benchmark.h>

#include "nxnflow/conditioner.hpp"
#include "nxnflow/layers.hpp"
#include "nxnflow/linalg.hpp"
#include "nxnflow/training.hpp"
#include "nxnflow/verify.hpp"

using namespace nxnflow;

namespace {

Tensor gaussian(const Tensor::Shape& shape, Rng& rng) {
  Tensor t(shape);
  for (double& v : t.data()) v = rng.normal();
  return t;
}

ModelConfig image_config(std::size_t depth) {
  ModelConfig c;
  c.depth = depth;
  c.levels = 2;
  c.hidden = 32;
  return c;
}

}  // namespace

static void BM_CouplingForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  AffineCoupling layer(c, 32, 3, rng);
  const Tensor x = gaussian({16, c, 8, 8}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(layer.forward(x));
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_CouplingForward)->Arg(4)->Arg(12);

static void BM_CouplingBackward(benchmark::State& state) {
  Rng rng(2);
  AffineCoupling layer(12, 32, 3, rng);
  const Tensor x = gaussian({16, 12, 4, 4}, rng);
  const LayerOutput out = layer.forward(x);
  const Tensor gy = gaussian(out.y.shape(), rng);
  const std::vector<double> gl(16, 1.0);
  Gradients grads = layer.zero_gradients();
  for (auto _ : state) benchmark::DoNotOptimize(layer.backward(out.cache, gy, gl, grads));
}
BENCHMARK(BM_CouplingBackward);

static void BM_NxnConvForward(benchmark::State& state) {
  Rng rng(3);
  NxnConv layer(12, Inv1x1Mode::kPlu, rng);
  const Tensor x = gaussian({64, 12, 4, 4}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(layer.forward(x));
}
BENCHMARK(BM_NxnConvForward);

static void BM_ConditionerForward(benchmark::State& state) {
  const auto hidden = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  Conditioner net(6, 12, hidden, 3, rng);
  const Tensor x = gaussian({16, 6, 4, 4}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
}
BENCHMARK(BM_ConditionerForward)->Arg(16)->Arg(32)->Arg(64);

static void BM_Slogdet(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(5);
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(lu_slogdet(a));
}
BENCHMARK(BM_Slogdet)->Arg(12)->Arg(48)->Arg(192);

static void BM_LossAndGradient(benchmark::State& state) {
  const auto threads = static_cast<std::size_t>(state.range(0));
  Rng rng(6);
  MultiScaleModel model = verify::random_model(image_config(4), 0.05, rng);
  Tensor batch({64, 3, 8, 8});
  for (double& v : batch.data()) v = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_gradient(model, batch, threads));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_LossAndGradient)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

static void BM_TrainStepPoints(benchmark::State& state) {
  ModelConfig c;
  c.rank = DataRank::kRank2;
  c.depth = 8;
  c.levels = 1;
  c.channels = 2;
  c.height = c.width = 1;
  Rng rng(7);
  const PointSource data(gen_2d(Density2D::kEightGaussians, 4096, rng).points);
  TrainConfig tc;
  tc.steps = 1;
  TrainState ts = make_train_state(c, tc);
  for (auto _ : state) {
    tc.steps = ts.step + 1;
    train(ts, data, tc);
  }
}
BENCHMARK(BM_TrainStepPoints)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
