#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "prwkv/checkpoint.hpp"
#include "prwkv/rng.hpp"
#include "prwkv/tensor.hpp"

namespace prwkv {

struct MixOptions {
    bool bqe = true;         // token-shift on/off
    bool bqe_lerp = false;   // mu*x + (1-mu)*x_star instead of x + (1-mu)*x_star
    bool bqe_grid2d = true;  // near-square grid shifts; false = 1-d sequence shifts
    bool bidirectional = true;
};

// Token t sits at (t / cols, t % cols) on a rows x cols grid with
// rows = ceil(sqrt(T)); each quarter of the channel axis reads from one of
// the four grid neighbors, -1 marking zero padding at the borders.
struct GridShiftMap {
    std::int64_t t = 0, rows = 0, cols = 0;
    std::array<std::vector<std::int64_t>, 4> source;
};

GridShiftMap make_grid_shift_map(std::int64_t t, bool grid2d = true);

// The channel-quartered shift tensor X*.
Tensor bqe_star(const Tensor& x, const GridShiftMap& map);

// X + (1 - mu) (x) X*  (or the lerp variant).
Tensor bqe(const Tensor& x, const Tensor& mu, const GridShiftMap& map, const MixOptions& opt = {});
Tensor bqe(const Tensor& x, const Tensor& mu, const MixOptions& opt = {});

struct SpatialMixParams {
    int heads = 1;
    Tensor ln_gamma, ln_beta;            // pre-norm
    Tensor mu_r, mu_k, mu_v, mu_g, mu_w; // shift mixing
    Tensor lambda_x, a_x, b_x;           // low-rank decay net
    Tensor u;                            // per-channel self boost
    Tensor w_r, b_r, w_k, b_k, w_v, b_v, w_g, b_g;
    Tensor w_o, b_o;
    Tensor head_ln_gamma, head_ln_beta;  // readout norm, per head

    static SpatialMixParams init(ParamStore& store, const std::string& prefix, int c, int heads,
                                 int d_lora, Rng& rng);
};

struct ChannelMixParams {
    Tensor ln_gamma, ln_beta;
    Tensor mu_r, mu_k;
    Tensor w_r, b_r;  // C -> C
    Tensor w_k, b_k;  // C -> hidden
    Tensor w_v, b_v;  // hidden -> C
    Tensor w_o, b_o;  // C -> C

    static ChannelMixParams init(ParamStore& store, const std::string& prefix, int c,
                                 int hidden_ratio, Rng& rng);
};

// nu(c) = lambda_x + tanh(c A_x) B_x applied twice per the double-shift
// construction, then w = exp(-exp(d)). Every entry lies strictly in (0, 1).
// x is expected pre-normalized by the caller.
Tensor compute_decay(const Tensor& x, const SpatialMixParams& p, const MixOptions& opt = {});

// Differentiable bidirectional decayed key-value attention with readout:
// out_t = r_t . (diag(u) k_t^T v_t + sum_{i != t} decay(t, i) k_i^T v_i).
Tensor biwkv(const Tensor& r, const Tensor& k, const Tensor& v, const Tensor& w, const Tensor& u,
             int heads, bool bidirectional = true);

// Residual addition is the caller's job for both mixers.
Tensor spatial_mixing(const Tensor& x, const SpatialMixParams& p, const MixOptions& opt = {});
Tensor channel_mixing(const Tensor& x, const ChannelMixParams& p, const MixOptions& opt = {});

}  // namespace prwkv
