#include <benchmark/benchmark.h>

#include "ldmshield/kernels.hpp"
#include "ldmshield/rng.hpp"
#include "ldmshield/tensor.hpp"

// Serial reference vs OpenMP backend on the hot kernels at the sizes the toy
// UNet actually runs (16x16 latents, 3x3 convs, small GEMMs).

using namespace ldms;

namespace {
struct ConvData {
    Tensor x, w, b, out;
    int H, W, Ci, Co;
    ConvData(int h, int w, int ci, int co) : H(h), W(w), Ci(ci), Co(co) {
        Rng rng(99);
        x = rng.normal_tensor({H, W, Ci});
        this->w = rng.normal_tensor({3, 3, Ci, Co});
        b = rng.normal_tensor({Co});
        out = Tensor({H, W, Co});
    }
};
}  // namespace

static void BM_conv2d_serial(benchmark::State& state) {
    ConvData d(16, 16, static_cast<int>(state.range(0)), static_cast<int>(state.range(0)));
    for (auto _ : state) {
        kern::serial::conv2d(d.H, d.W, d.Ci, d.Co, 3, 3, 1, 1, d.x.data(), d.w.data(), d.b.data(),
                             d.out.data());
        benchmark::ClobberMemory();
    }
}
BENCHMARK(BM_conv2d_serial)->Arg(16)->Arg(32)->Arg(64);

static void BM_conv2d_omp(benchmark::State& state) {
    ConvData d(16, 16, static_cast<int>(state.range(0)), static_cast<int>(state.range(0)));
    for (auto _ : state) {
        kern::omp::conv2d(d.H, d.W, d.Ci, d.Co, 3, 3, 1, 1, d.x.data(), d.w.data(), d.b.data(),
                          d.out.data());
        benchmark::ClobberMemory();
    }
}
BENCHMARK(BM_conv2d_omp)->Arg(16)->Arg(32)->Arg(64);

static void BM_matmul_serial(benchmark::State& state) {
    int n = static_cast<int>(state.range(0));
    Rng rng(7);
    Tensor a = rng.normal_tensor({n, n});
    Tensor b = rng.normal_tensor({n, n});
    Tensor c({n, n});
    for (auto _ : state) {
        kern::serial::matmul(n, n, n, a.data(), b.data(), c.data());
        benchmark::ClobberMemory();
    }
}
BENCHMARK(BM_matmul_serial)->Arg(64)->Arg(128)->Arg(256);

static void BM_matmul_omp(benchmark::State& state) {
    int n = static_cast<int>(state.range(0));
    Rng rng(7);
    Tensor a = rng.normal_tensor({n, n});
    Tensor b = rng.normal_tensor({n, n});
    Tensor c({n, n});
    for (auto _ : state) {
        kern::omp::matmul(n, n, n, a.data(), b.data(), c.data());
        benchmark::ClobberMemory();
    }
}
BENCHMARK(BM_matmul_omp)->Arg(64)->Arg(128)->Arg(256);

static void BM_sum_serial(benchmark::State& state) {
    Rng rng(8);
    std::size_t n = static_cast<std::size_t>(state.range(0));
    Tensor x = rng.normal_tensor({static_cast<int>(n)});
    for (auto _ : state) benchmark::DoNotOptimize(kern::serial::sum(n, x.data()));
}
BENCHMARK(BM_sum_serial)->Arg(1 << 16)->Arg(1 << 20);

static void BM_sum_omp(benchmark::State& state) {
    Rng rng(8);
    std::size_t n = static_cast<std::size_t>(state.range(0));
    Tensor x = rng.normal_tensor({static_cast<int>(n)});
    for (auto _ : state) benchmark::DoNotOptimize(kern::omp::sum(n, x.data()));
}
BENCHMARK(BM_sum_omp)->Arg(1 << 16)->Arg(1 << 20);

BENCHMARK_MAIN();
