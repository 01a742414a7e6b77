#include <benchmark/benchmark.h>

#include <vector>

#include "prwkv/rng.hpp"
#include "prwkv/wkv.hpp"

namespace {

struct Inputs {
    std::vector<double> r, k, v, w, u, out;
};

Inputs make_inputs(std::int64_t t, int c) {
    prwkv::Rng rng(99);
    Inputs in;
    const std::size_t n = static_cast<std::size_t>(t) * static_cast<std::size_t>(c);
    in.r.resize(n);
    in.k.resize(n);
    in.v.resize(n);
    in.w.resize(n);
    in.u.resize(static_cast<std::size_t>(c));
    in.out.resize(n);
    for (auto& x : in.r) x = rng.uniform(-1, 1);
    for (auto& x : in.k) x = rng.uniform(-1, 1);
    for (auto& x : in.v) x = rng.uniform(-1, 1);
    for (auto& x : in.w) x = rng.uniform(0.2, 0.98);
    for (auto& x : in.u) x = rng.uniform(0, 1);
    return in;
}

constexpr int kHeads = 4;
constexpr int kChannels = 64;

void BM_BiwkvScan(benchmark::State& state) {
    const std::int64_t t = state.range(0);
    Inputs in = make_inputs(t, kChannels);
    for (auto _ : state) {
        prwkv::wkv::biwkv_scan(t, kHeads, kChannels / kHeads, in.r.data(), in.k.data(), in.v.data(),
                               in.w.data(), in.u.data(), in.out.data());
        benchmark::DoNotOptimize(in.out.data());
    }
    state.SetComplexityN(t);
}

void BM_QuadraticAttention(benchmark::State& state) {
    const std::int64_t t = state.range(0);
    Inputs in = make_inputs(t, kChannels);
    for (auto _ : state) {
        prwkv::wkv::quadratic_attention_reference(t, kHeads, kChannels / kHeads, in.r.data(),
                                                  in.k.data(), in.v.data(), in.out.data());
        benchmark::DoNotOptimize(in.out.data());
    }
    state.SetComplexityN(t);
}

void BM_BiwkvReference(benchmark::State& state) {
    const std::int64_t t = state.range(0);
    Inputs in = make_inputs(t, kChannels);
    for (auto _ : state) {
        prwkv::wkv::biwkv_reference(t, kHeads, kChannels / kHeads, in.r.data(), in.k.data(),
                                    in.v.data(), in.w.data(), in.u.data(), in.out.data());
        benchmark::DoNotOptimize(in.out.data());
    }
}

}  // namespace

BENCHMARK(BM_BiwkvScan)->RangeMultiplier(2)->Range(256, 4096)->Complexity(benchmark::oN);
BENCHMARK(BM_QuadraticAttention)->RangeMultiplier(2)->Range(256, 4096)->Complexity(benchmark::oNSquared);
BENCHMARK(BM_BiwkvReference)->Arg(64)->Arg(128);

int main(int argc, char** argv) {
    benchmark::Initialize(&argc, argv);
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
