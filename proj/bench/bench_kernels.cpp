// Throughput comparison of the serial reference kernels and their OpenMP
// variants on training-shaped workloads.

#include <benchmark/benchmark.h>

#include "medseg/kernels.hpp"
#include "medseg/rng.hpp"

using namespace medseg;
namespace k = medseg::kernels;

namespace {

Tensor random_tensor(std::vector<long> shape, uint64_t seed) {
    Rng rng(seed);
    Tensor t(std::move(shape));
    for (long i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    return t;
}

template <void (*Conv)(const Tensor&, const Tensor&, Tensor&, long, long)>
void bm_conv2d(benchmark::State& state) {
    const long c = state.range(0);
    Tensor x = random_tensor({8, c, 32, 32}, 1);
    Tensor w = random_tensor({c, c, 3, 3}, 2);
    Tensor y({8, c, 32, 32});
    for (auto _ : state) {
        Conv(x, w, y, 1, 1);
        benchmark::DoNotOptimize(y.data());
        benchmark::ClobberMemory();
    }
}

template <void (*Bwd)(const Tensor&, const Tensor&, Tensor&, long, long)>
void bm_conv2d_bwd_weight(benchmark::State& state) {
    const long c = state.range(0);
    Tensor x = random_tensor({8, c, 32, 32}, 1);
    Tensor gy = random_tensor({8, c, 32, 32}, 2);
    Tensor gw({c, c, 3, 3});
    for (auto _ : state) {
        Bwd(gy, x, gw, 1, 1);
        benchmark::DoNotOptimize(gw.data());
        benchmark::ClobberMemory();
    }
}

template <void (*Bn)(const Tensor&, Tensor&, Tensor&)>
void bm_bn_stats(benchmark::State& state) {
    Tensor x = random_tensor({16, 32, 32, 32}, 1);
    Tensor mean({32}), var({32});
    for (auto _ : state) {
        Bn(x, mean, var);
        benchmark::DoNotOptimize(mean.data());
        benchmark::ClobberMemory();
    }
}

template <void (*Resize)(const Tensor&, Tensor&)>
void bm_resize_bilinear(benchmark::State& state) {
    Tensor src = random_tensor({256, 256}, 1);
    Tensor dst({64, 64});
    for (auto _ : state) {
        Resize(src, dst);
        benchmark::DoNotOptimize(dst.data());
        benchmark::ClobberMemory();
    }
}

}  // namespace

BENCHMARK(bm_conv2d<k::reference::conv2d_forward>)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_conv2d<k::openmp::conv2d_forward>)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_conv2d_bwd_weight<k::reference::conv2d_backward_weight>)
    ->Arg(8)
    ->Arg(32)
    ->Unit(benchmark::kMillisecond);
BENCHMARK(bm_conv2d_bwd_weight<k::openmp::conv2d_backward_weight>)
    ->Arg(8)
    ->Arg(32)
    ->Unit(benchmark::kMillisecond);
BENCHMARK(bm_bn_stats<k::reference::bn_stats>)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_bn_stats<k::openmp::bn_stats>)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_resize_bilinear<k::reference::resize_bilinear>)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_resize_bilinear<k::openmp::resize_bilinear>)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
