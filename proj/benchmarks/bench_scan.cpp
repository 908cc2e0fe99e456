#include <benchmark/benchmark.h>

#include <random>

#include "mambatext/scan.hpp"

using namespace mambatext;

namespace {

SelectiveSSMParams<float> bench_params(std::size_t d_inner, std::size_t n, std::size_t r) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<float> u(-0.5f, 0.5f);
    SelectiveSSMParams<float> p;
    p.A_log = Tensor<float>({d_inner, n});
    p.D_skip = Tensor<float>({d_inner});
    p.W_xproj = Tensor<float>({d_inner, r + 2 * n});
    p.W_dtproj = Tensor<float>({r, d_inner});
    p.b_dt = Tensor<float>({d_inner});
    for (auto* t : {&p.A_log, &p.D_skip, &p.W_xproj, &p.W_dtproj, &p.b_dt})
        for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = u(rng);
    return p;
}

Tensor<float> bench_input(std::size_t len, std::size_t d_inner) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    Tensor<float> x({len, d_inner});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = u(rng);
    return x;
}

}  // namespace

static void BM_SelectiveScanSequential(benchmark::State& state) {
    const auto len = static_cast<std::size_t>(state.range(0));
    const std::size_t d_inner = 128, n = 8;
    auto p = bench_params(d_inner, n, 4);
    auto x = bench_input(len, d_inner);
    for (auto _ : state) {
        Tensor<float> y = selective_scan_sequential(p, x);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(len * d_inner * n));
}
BENCHMARK(BM_SelectiveScanSequential)->RangeMultiplier(4)->Range(64, 4096);

static void BM_SelectiveScanParallel(benchmark::State& state) {
    const auto len = static_cast<std::size_t>(state.range(0));
    const std::size_t d_inner = 128, n = 8;
    auto p = bench_params(d_inner, n, 4);
    auto x = bench_input(len, d_inner);
    for (auto _ : state) {
        Tensor<float> y = selective_scan_parallel(p, x, {}, 2);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(len * d_inner * n));
}
BENCHMARK(BM_SelectiveScanParallel)->RangeMultiplier(4)->Range(64, 4096);

static void BM_ParallelScanPrimitive(benchmark::State& state) {
    const auto len = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-0.9, 0.9);
    std::vector<ScanElement<double>> e(len);
    for (auto& v : e) v = {u(rng), u(rng)};
    for (auto _ : state) {
        auto pref = parallel_scan(e);
        benchmark::DoNotOptimize(pref.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(len));
}
BENCHMARK(BM_ParallelScanPrimitive)->RangeMultiplier(8)->Range(64, 32768);
