#include <benchmark/benchmark.h>

#include <vector>

#include "firediff/kernels.hpp"
#include "firediff/morphology.hpp"
#include "firediff/rng.hpp"
#include "firediff/sim.hpp"

using namespace firediff;

namespace {

std::vector<float> noise(long long n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(static_cast<std::size_t>(n));
  fill_normal(std::span<float>(v), rng);
  return v;
}

kernels::ConvShape conv_shape(benchmark::State& state) {
  kernels::ConvShape s;
  s.batch = 4;
  s.in_channels = s.out_channels = static_cast<int>(state.range(0));
  s.height = s.width = 64;
  return s;
}

template <bool Parallel>
void BM_Conv2dForward(benchmark::State& state) {
  const auto s = conv_shape(state);
  const auto x = noise(s.input_size(), 1), w = noise(s.weight_size(), 2), b = noise(s.out_channels, 3);
  std::vector<float> y(static_cast<std::size_t>(s.output_size()));
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::conv2d_forward<float>(s, x, w, b, y);
    } else {
      kernels::serial::conv2d_forward<float>(s, x, w, b, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * s.output_size() * s.in_channels * 9);
}

template <bool Parallel>
void BM_Conv2dBackward(benchmark::State& state) {
  const auto s = conv_shape(state);
  const auto x = noise(s.input_size(), 1), w = noise(s.weight_size(), 2), dy = noise(s.output_size(), 3);
  std::vector<float> dx(x.size()), dw(w.size()), db(static_cast<std::size_t>(s.out_channels));
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::conv2d_backward<float>(s, x, w, dy, dx, dw, db);
    } else {
      kernels::serial::conv2d_backward<float>(s, x, w, dy, dx, dw, db);
    }
    benchmark::DoNotOptimize(dx.data());
  }
}

template <bool Parallel>
void BM_GroupNormForward(benchmark::State& state) {
  kernels::GroupNormShape s;
  s.batch = 8;
  s.channels = static_cast<int>(state.range(0));
  s.groups = 8;
  s.spatial = 64 * 64;
  const long long n = 1LL * s.batch * s.channels * s.spatial;
  const auto x = noise(n, 4);
  const std::vector<float> gamma(static_cast<std::size_t>(s.channels), 1.0f), beta(gamma.size(), 0.0f);
  std::vector<float> xhat(x.size()), y(x.size()), inv(static_cast<std::size_t>(s.batch * s.groups));
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::group_norm_forward<float>(s, x, gamma, beta, 1e-5, xhat, inv, y);
    } else {
      kernels::serial::group_norm_forward<float>(s, x, gamma, beta, 1e-5, xhat, inv, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_Dilate(benchmark::State& state) {
  Rng rng(5);
  BinaryMask m(512, 512);
  for (auto& b : m.bits()) b = uniform01(rng) < 0.05;
  const StructuringElement se(static_cast<int>(state.range(0)));
  BinaryMask out(512, 512);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::dilate(m, se.offsets(), out);
    } else {
      kernels::serial::dilate(m, se.offsets(), out);
    }
    benchmark::DoNotOptimize(out.bits().data());
  }
}

void BM_StepFire(benchmark::State& state) {
  sim::SimConfig c;
  c.width = c.height = static_cast<int>(state.range(0));
  auto w = sim::gen_world(c, 3);
  for (int k = 0; k < 20; ++k) w = sim::step_fire(w, c);
  for (auto _ : state) benchmark::DoNotOptimize(sim::step_fire(w, c));
}

}  // namespace

BENCHMARK(BM_Conv2dForward<false>)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv2dForward<true>)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv2dBackward<false>)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv2dBackward<true>)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GroupNormForward<false>)->Arg(32)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_GroupNormForward<true>)->Arg(32)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Dilate<false>)->Arg(3)->Arg(6)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Dilate<true>)->Arg(3)->Arg(6)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_StepFire)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
