#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "prwkv/checkpoint.hpp"
#include "prwkv/pointops.hpp"
#include "prwkv/rng.hpp"
#include "prwkv/tensor.hpp"

namespace prwkv {

// Edge net f: (3 + C) -> C with SiLU; vertex update g: 2C -> C with SiLU and
// a residual connection; stabilizer h: C -> 3 estimating a per-vertex
// coordinate offset applied inside f's relative-position argument.
struct LgmIterationParams {
    Tensor f_w, f_b;
    Tensor g_w, g_b;
    Tensor h_w, h_b;
};

struct LgmParams {
    int iterations = 3;
    double radius = 0.3;
    bool stabilizer = true;
    bool mean_aggregate = false;     // default is coordinatewise max
    std::vector<LgmIterationParams> iters;  // one entry when tied, else per iteration

    static LgmParams init(ParamStore& store, const std::string& prefix, int c, int iterations,
                          double radius, bool tied, Rng& rng);

    const LgmIterationParams& at(int t) const {
        return iters[iters.size() == 1 ? 0 : static_cast<std::size_t>(t)];
    }
};

// Iterative vertex refinement over the fixed-radius graph of the anchors.
// The edge set is built once and never rewired; isolated vertices aggregate
// a zero vector.
Tensor lgm_forward(const std::vector<double>& anchors, const Tensor& feats, const LgmParams& p);

// Variant over a prebuilt graph (anchors only feed relative positions).
Tensor lgm_forward_graph(const std::vector<double>& anchors, const RadiusGraph& graph,
                         const Tensor& feats, const LgmParams& p);

// True when shifting every anchor by delta leaves the output within tol.
bool lgm_translation_check(const std::vector<double>& anchors, const Tensor& feats,
                           const std::array<double, 3>& delta, const LgmParams& p,
                           double tol = 1e-9);

}  // namespace prwkv
