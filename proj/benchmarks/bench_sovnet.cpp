// Microbenchmarks for the hot paths: lifting/group correlations, degree
// routing, and the full desk-model forward pass.

#include <benchmark/benchmark.h>

#include <random>

#include "sovnet/training.hpp"

namespace {

template <typename T>
sovnet::Tensor<T> random_tensor(const sovnet::Shape& shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(u(rng));
  return sovnet::Tensor<T>::from_data(shape, std::move(v), false);
}

void BM_lift_correlate(benchmark::State& state) {
  sovnet::NoGradGuard ng;
  std::mt19937_64 rng(1);
  const int H = static_cast<int>(state.range(0));
  sovnet::GroupGrid grid{sovnet::GroupKind::p4, H, H};
  sovnet::ConvGeometry g = sovnet::make_geometry(H, H, 3, 1, sovnet::PadMode::same);
  auto image = random_tensor<float>({1, std::size_t(H), std::size_t(H)}, rng);
  auto w = random_tensor<float>({4, 1, 3, 3}, rng);
  auto b = random_tensor<float>({4}, rng);
  for (auto _ : state)
    benchmark::DoNotOptimize(sovnet::lift_correlate(image, w, b, grid, g));
}
BENCHMARK(BM_lift_correlate)->Arg(15)->Arg(29);

void BM_group_correlate(benchmark::State& state) {
  sovnet::NoGradGuard ng;
  std::mt19937_64 rng(2);
  const int H = static_cast<int>(state.range(0));
  sovnet::GroupGrid grid{sovnet::GroupKind::p4, H, H};
  sovnet::ConvGeometry g = sovnet::make_geometry(H, H, 3, 1, sovnet::PadMode::same);
  auto f = random_tensor<float>({4, 4, std::size_t(H), std::size_t(H)}, rng);
  auto w = random_tensor<float>({4, 4, 4, 3, 3}, rng);
  auto b = random_tensor<float>({4}, rng);
  for (auto _ : state)
    benchmark::DoNotOptimize(sovnet::group_correlate(f, w, b, grid, g));
}
BENCHMARK(BM_group_correlate)->Arg(15)->Arg(29);

void BM_route_degree(benchmark::State& state) {
  sovnet::NoGradGuard ng;
  std::mt19937_64 rng(3);
  const int H = 15;
  sovnet::GroupGrid grid{sovnet::GroupKind::p4, H, H};
  std::vector<sovnet::Tensor<float>> inputs;
  for (int i = 0; i < 2; ++i)
    inputs.push_back(random_tensor<float>({4, 4, std::size_t(H), std::size_t(H)}, rng));
  sovnet::RoutingLayer<float> layer;
  for (int j = 0; j < 2; ++j) {
    sovnet::ResidualBlock<float> blk;
    blk.stride = 2;
    blk.w1 = random_tensor<float>({4, 4, 4, 3, 3}, rng);
    blk.b1 = random_tensor<float>({4}, rng);
    blk.w2 = random_tensor<float>({4, 4, 4, 3, 3}, rng);
    blk.b2 = random_tensor<float>({4}, rng);
    blk.wp = random_tensor<float>({4, 4, 4, 1, 1}, rng);
    blk.bp = random_tensor<float>({4}, rng);
    layer.blocks.push_back(std::move(blk));
  }
  for (auto _ : state)
    benchmark::DoNotOptimize(sovnet::route_degree(inputs, layer, grid));
}
BENCHMARK(BM_route_degree);

void BM_forward_desk(benchmark::State& state) {
  sovnet::NoGradGuard ng;
  std::mt19937_64 rng(4);
  sovnet::ModelConfig mc;  // desk defaults
  sovnet::SovnetModel<float> model(mc);
  model.init(5);
  auto image = random_tensor<float>({1, std::size_t(mc.image_size), std::size_t(mc.image_size)}, rng);
  for (auto _ : state)
    benchmark::DoNotOptimize(model.class_scores(image));
}
BENCHMARK(BM_forward_desk);

void BM_forward_backward_desk(benchmark::State& state) {
  std::mt19937_64 rng(6);
  sovnet::ModelConfig mc;
  sovnet::SovnetModel<float> model(mc);
  model.init(7);
  auto image = random_tensor<float>({1, std::size_t(mc.image_size), std::size_t(mc.image_size)}, rng);
  sovnet::MarginSchedule::Margins m{0.9, 0.1, 0.5};
  for (auto _ : state) {
    auto tr = model.forward(image);
    sovnet::margin_loss(tr.scores, 0, m).backward();
    for (auto* p : model.parameters()) p->zero_grad();
  }
}
BENCHMARK(BM_forward_backward_desk);

}  // namespace

BENCHMARK_MAIN();
