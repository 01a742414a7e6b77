#include <benchmark/benchmark.h>

#include "prwkv/pointops.hpp"
#include "prwkv/rng.hpp"

namespace {

prwkv::PointCloud random_cloud(std::int64_t n) {
    prwkv::Rng rng(7);
    prwkv::PointCloud pc;
    pc.coords.resize(static_cast<std::size_t>(n) * 3);
    for (double& v : pc.coords) v = rng.uniform(-1.0, 1.0);
    return pc;
}

void BM_RadiusGraphCellList(benchmark::State& state) {
    auto pc = random_cloud(state.range(0));
    for (auto _ : state) {
        auto g = prwkv::radius_graph_celllist(pc, 0.15);
        benchmark::DoNotOptimize(g.edges.size());
    }
    state.SetComplexityN(state.range(0));
}

void BM_RadiusGraphBruteForce(benchmark::State& state) {
    auto pc = random_cloud(state.range(0));
    for (auto _ : state) {
        auto g = prwkv::radius_graph_bruteforce(pc, 0.15);
        benchmark::DoNotOptimize(g.edges.size());
    }
    state.SetComplexityN(state.range(0));
}

void BM_Fps(benchmark::State& state) {
    auto pc = random_cloud(state.range(0));
    for (auto _ : state) {
        auto idx = prwkv::fps(pc, state.range(0) / 2, 0);
        benchmark::DoNotOptimize(idx.data());
    }
}

}  // namespace

BENCHMARK(BM_RadiusGraphCellList)->RangeMultiplier(2)->Range(512, 8192)->Complexity(benchmark::oN);
BENCHMARK(BM_RadiusGraphBruteForce)->RangeMultiplier(2)->Range(512, 4096)->Complexity(benchmark::oNSquared);
BENCHMARK(BM_Fps)->Arg(1024)->Arg(2048);

int main(int argc, char** argv) {
    benchmark::Initialize(&argc, argv);
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
