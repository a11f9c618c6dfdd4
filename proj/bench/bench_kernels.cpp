#include <random>

#include <benchmark/benchmark.h>

#include "psynth/kernels.hpp"
#include "psynth/model.hpp"

using namespace psynth;

namespace {

Tensor random_tensor(std::size_t c, std::size_t t, std::uint64_t seed) {
  Tensor x(c, t);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& v : x.data) v = u(rng);
  return x;
}

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  std::vector<double> v(n);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (auto& x : v) x = u(rng);
  return v;
}

// Arguments: in channels, out channels, input time, stride. Filter length 5 throughout.
struct ConvCase {
  ConvShape shape;
  Tensor x;
  std::vector<double> w, b;
  Tensor gy;
  explicit ConvCase(const benchmark::State& st) {
    shape = {static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(1)), 5,
             static_cast<std::size_t>(st.range(3))};
    x = random_tensor(shape.in_channels, static_cast<std::size_t>(st.range(2)), 1);
    w = random_vec(shape.weight_count(), 2);
    b = random_vec(shape.out_channels, 3);
    gy = random_tensor(shape.out_channels, conv_out_time(x.time, shape.stride), 4);
  }
  double flops() const { return 2.0 * static_cast<double>(shape.weight_count() * gy.time); }
};

template <auto Conv>
void BM_conv1d(benchmark::State& st) {
  const ConvCase c(st);
  for (auto _ : st) benchmark::DoNotOptimize(Conv(c.x, c.shape, c.w, c.b));
  st.counters["FLOP/s"] = benchmark::Counter(c.flops(), benchmark::Counter::kIsIterationInvariantRate);
}

template <auto Backward>
void BM_conv1d_backward(benchmark::State& st) {
  const ConvCase c(st);
  Tensor gx;
  std::vector<double> gw(c.w.size()), gb(c.b.size());
  for (auto _ : st) {
    Backward(c.x, c.shape, c.w, c.gy, &gx, gw, gb);
    benchmark::DoNotOptimize(gw.data());
  }
  st.counters["FLOP/s"] = benchmark::Counter(2.0 * c.flops(), benchmark::Counter::kIsIterationInvariantRate);
}

template <auto Up>
void BM_upsample(benchmark::State& st) {
  const auto x = random_tensor(static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(1)), 5);
  for (auto _ : st) benchmark::DoNotOptimize(Up(x));
}

void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({8, 16, 16384, 2})->Args({16, 16, 8192, 2})->Args({64, 64, 512, 2})->Args({48, 16, 16384, 1});
  b->Unit(benchmark::kMicrosecond);
}

void BM_forward_desk(benchmark::State& st) {
  const auto cfg = ModelConfig::desk();
  const auto p = build(cfg);
  TimbralVector fs;
  fs.values.fill(0.5);
  const auto cond = make_conditioning(parametric_envelope(5.0, 80.0, 1.0, kSoundLength), fs, cfg);
  for (auto _ : st) benchmark::DoNotOptimize(forward(p, cfg, cond));
}

}  // namespace

BENCHMARK(BM_conv1d<kernels::conv1d>)->Name("conv1d/openmp")->Apply(conv_args);
BENCHMARK(BM_conv1d<reference::conv1d>)->Name("conv1d/serial")->Apply(conv_args);
BENCHMARK(BM_conv1d_backward<kernels::conv1d_backward>)->Name("conv1d_backward/openmp")->Apply(conv_args);
BENCHMARK(BM_conv1d_backward<reference::conv1d_backward>)->Name("conv1d_backward/serial")->Apply(conv_args);
BENCHMARK(BM_upsample<kernels::upsample2x>)->Name("upsample2x/openmp")->Args({16, 8192});
BENCHMARK(BM_upsample<reference::upsample2x>)->Name("upsample2x/serial")->Args({16, 8192});
BENCHMARK(BM_forward_desk)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
