#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace prwkv {

struct GradCheckResult {
    std::string name;
    double max_err = 0.0;
    double tolerance = 0.0;
    bool ok = false;
};

// Central finite differences against backward() for every op and for the
// full tiny model (pretraining loss). 64-bit, h = 1e-5.
std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed = 11);

}  // namespace prwkv
