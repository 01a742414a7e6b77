#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace prwkv {

struct BenchRecord {
    std::int64_t t = 0;
    std::uint64_t flops_linear = 0;     // analytic, full spatial mixing
    std::uint64_t flops_quadratic = 0;  // analytic, quadratic attention core
    double time_linear_ms = 0.0;        // measured, scan kernel
    double time_quadratic_ms = 0.0;     // measured, quadratic kernel
    int reps = 0;
};

// Medians over `reps` timed runs of both kernels on seeded random inputs.
std::vector<BenchRecord> bench_scaling(const std::vector<std::int64_t>& ts, int c, int heads,
                                       int reps, std::uint64_t seed, bool use_f32 = false);

void write_scaling_csv(const std::string& path, const std::vector<BenchRecord>& rows);

}  // namespace prwkv
