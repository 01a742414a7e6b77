#include "prwkv/bench.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <stdexcept>

#include "prwkv/rng.hpp"
#include "prwkv/wkv.hpp"

namespace prwkv {

namespace {

using Clock = std::chrono::steady_clock;

template <typename S>
BenchRecord bench_one(std::int64_t t, int c, int heads, int reps, std::uint64_t seed) {
    const int d = c / heads;
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    const std::size_t n = static_cast<std::size_t>(t) * static_cast<std::size_t>(c);
    std::vector<S> r(n), k(n), v(n), w(n), u(static_cast<std::size_t>(c)), out(n);
    for (auto& x : r) x = static_cast<S>(rng.uniform(-1.0, 1.0));
    for (auto& x : k) x = static_cast<S>(rng.uniform(-1.0, 1.0));
    for (auto& x : v) x = static_cast<S>(rng.uniform(-1.0, 1.0));
    for (auto& x : w) x = static_cast<S>(rng.uniform(0.2, 0.98));
    for (auto& x : u) x = static_cast<S>(rng.uniform(0.0, 1.0));

    auto time_median = [&](auto&& fn) {
        std::vector<double> times;
        times.reserve(static_cast<std::size_t>(reps));
        for (int i = 0; i < reps; ++i) {
            const auto start = Clock::now();
            fn();
            const auto stop = Clock::now();
            times.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
        }
        std::sort(times.begin(), times.end());
        return times[times.size() / 2];
    };

    BenchRecord rec;
    rec.t = t;
    rec.reps = reps;
    rec.flops_linear = wkv::flops_spatial_mixing(static_cast<std::uint64_t>(t),
                                                 static_cast<std::uint64_t>(c),
                                                 static_cast<std::uint64_t>(heads),
                                                 static_cast<std::uint64_t>(std::max(c / 8, 8)));
    rec.flops_quadratic = wkv::flops_quadratic_attention(static_cast<std::uint64_t>(t),
                                                         static_cast<std::uint64_t>(c),
                                                         static_cast<std::uint64_t>(heads));
    rec.time_linear_ms = time_median([&]() {
        wkv::biwkv_scan(t, heads, d, r.data(), k.data(), v.data(), w.data(), u.data(), out.data());
    });
    rec.time_quadratic_ms = time_median([&]() {
        wkv::quadratic_attention_reference(t, heads, d, r.data(), k.data(), v.data(), out.data());
    });
    return rec;
}

}  // namespace

std::vector<BenchRecord> bench_scaling(const std::vector<std::int64_t>& ts, int c, int heads,
                                       int reps, std::uint64_t seed, bool use_f32) {
    if (ts.empty()) throw std::invalid_argument("bench_scaling: empty length list");
    for (std::size_t i = 1; i < ts.size(); ++i) {
        if (ts[i] <= ts[i - 1]) throw std::invalid_argument("bench_scaling: lengths must ascend");
    }
    if (c % heads != 0) throw std::invalid_argument("bench_scaling: width not divisible by heads");
    std::vector<BenchRecord> out;
    out.reserve(ts.size());
    for (std::int64_t t : ts) {
        out.push_back(use_f32 ? bench_one<float>(t, c, heads, reps, seed)
                              : bench_one<double>(t, c, heads, reps, seed));
    }
    return out;
}

void write_scaling_csv(const std::string& path, const std::vector<BenchRecord>& rows) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "T,flops_linear,flops_quadratic,time_linear_ms,time_quadratic_ms\n";
    f.precision(17);
    for (const auto& r : rows)
        f << r.t << ',' << r.flops_linear << ',' << r.flops_quadratic << ',' << r.time_linear_ms
          << ',' << r.time_quadratic_ms << '\n';
}

}  // namespace prwkv
