#pragma once

#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace prwkv::wkv {

// Bidirectional decayed key-value attention over T tokens split into H heads
// of D channels. Layouts: r, k, v, w are [T x H*D] row-major, u is [H*D],
// out is [T x H*D]. The decay weight between tokens i and t is the
// elementwise product of w over the tokens strictly between them; the
// self-term is boosted by u instead of decayed.

// Definitional double loop, Theta(T^2 D^2) per head. Ground truth.
template <typename S>
void biwkv_reference(std::int64_t t_len, int heads, int d, const S* r, const S* k, const S* v,
                     const S* w, const S* u, S* out, bool bidirectional = true) {
    const std::int64_t c = static_cast<std::int64_t>(heads) * d;
    std::vector<S> state(static_cast<std::size_t>(d) * d);
    std::vector<S> decay(static_cast<std::size_t>(d));
    for (int h = 0; h < heads; ++h) {
        const std::int64_t off = static_cast<std::int64_t>(h) * d;
        for (std::int64_t t = 0; t < t_len; ++t) {
            // self term: diag(u) k_t^T v_t
            const S* kt = k + t * c + off;
            const S* vt = v + t * c + off;
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b)
                    state[static_cast<std::size_t>(a) * d + b] = u[off + a] * kt[a] * vt[b];
            // tokens before t
            for (int a = 0; a < d; ++a) decay[static_cast<std::size_t>(a)] = S(1);
            for (std::int64_t i = t - 1; i >= 0; --i) {
                if (i < t - 1) {
                    const S* wj = w + (i + 1) * c + off;
                    for (int a = 0; a < d; ++a) decay[static_cast<std::size_t>(a)] *= wj[a];
                }
                const S* ki = k + i * c + off;
                const S* vi = v + i * c + off;
                for (int a = 0; a < d; ++a) {
                    const S coef = decay[static_cast<std::size_t>(a)] * ki[a];
                    for (int b = 0; b < d; ++b) state[static_cast<std::size_t>(a) * d + b] += coef * vi[b];
                }
            }
            // tokens after t
            if (bidirectional) {
                for (int a = 0; a < d; ++a) decay[static_cast<std::size_t>(a)] = S(1);
                for (std::int64_t i = t + 1; i < t_len; ++i) {
                    if (i > t + 1) {
                        const S* wj = w + (i - 1) * c + off;
                        for (int a = 0; a < d; ++a) decay[static_cast<std::size_t>(a)] *= wj[a];
                    }
                    const S* ki = k + i * c + off;
                    const S* vi = v + i * c + off;
                    for (int a = 0; a < d; ++a) {
                        const S coef = decay[static_cast<std::size_t>(a)] * ki[a];
                        for (int b = 0; b < d; ++b) state[static_cast<std::size_t>(a) * d + b] += coef * vi[b];
                    }
                }
            }
            // readout o_t = r_t . wkv_t
            const S* rt = r + t * c + off;
            S* ot = out + t * c + off;
            for (int b = 0; b < d; ++b) {
                S acc = S(0);
                for (int a = 0; a < d; ++a) acc += rt[a] * state[static_cast<std::size_t>(a) * d + b];
                ot[b] = acc;
            }
        }
    }
}

// Working-state footprint of the scan, in scalars. Never a function of T
// beyond the output itself.
inline std::int64_t biwkv_scan_workspace_scalars(int d) { return 2LL * d * d; }

// Two-pass linear scan, Theta(T D^2) per head. When state_fwd/state_bwd are
// given (each T x D x D per head, laid out [T][D][D] head-major) the per-token
// pre-update states are recorded for the backward pass.
template <typename S>
void biwkv_scan(std::int64_t t_len, int heads, int d, const S* r, const S* k, const S* v,
                const S* w, const S* u, S* out, bool bidirectional = true,
                S* state_fwd = nullptr, S* state_bwd = nullptr) {
    const std::int64_t c = static_cast<std::int64_t>(heads) * d;
    const std::int64_t dd = static_cast<std::int64_t>(d) * d;
    std::vector<S> sf(static_cast<std::size_t>(dd));
    std::vector<S> sb(static_cast<std::size_t>(dd));
    for (int h = 0; h < heads; ++h) {
        const std::int64_t off = static_cast<std::int64_t>(h) * d;
        const std::int64_t stoff = static_cast<std::int64_t>(h) * t_len * dd;

        // forward pass: S_f(t) covers all i < t; emit r_t . S_f(t) and the
        // u-boosted self term
        std::fill(sf.begin(), sf.end(), S(0));
        for (std::int64_t t = 0; t < t_len; ++t) {
            const S* rt = r + t * c + off;
            const S* kt = k + t * c + off;
            const S* vt = v + t * c + off;
            const S* wt = w + t * c + off;
            if (state_fwd)
                for (std::int64_t i = 0; i < dd; ++i) state_fwd[stoff + t * dd + i] = sf[static_cast<std::size_t>(i)];
            S* ot = out + t * c + off;
            S boost = S(0);
            for (int a = 0; a < d; ++a) boost += rt[a] * u[off + a] * kt[a];
            for (int b = 0; b < d; ++b) {
                S acc = S(0);
                for (int a = 0; a < d; ++a) acc += rt[a] * sf[static_cast<std::size_t>(a) * d + b];
                ot[b] = acc + boost * vt[b];
            }
            for (int a = 0; a < d; ++a) {
                const S wa = wt[a];
                const S ka = kt[a];
                S* row = sf.data() + static_cast<std::size_t>(a) * d;
                for (int b = 0; b < d; ++b) row[b] = wa * row[b] + ka * vt[b];
            }
        }

        if (!bidirectional) {
            if (state_bwd) std::fill(state_bwd + stoff, state_bwd + stoff + t_len * dd, S(0));
            continue;
        }

        // backward pass: S_b(t) covers all i > t
        std::fill(sb.begin(), sb.end(), S(0));
        for (std::int64_t t = t_len - 1; t >= 0; --t) {
            const S* rt = r + t * c + off;
            const S* kt = k + t * c + off;
            const S* vt = v + t * c + off;
            const S* wt = w + t * c + off;
            if (state_bwd)
                for (std::int64_t i = 0; i < dd; ++i) state_bwd[stoff + t * dd + i] = sb[static_cast<std::size_t>(i)];
            S* ot = out + t * c + off;
            for (int b = 0; b < d; ++b) {
                S acc = S(0);
                for (int a = 0; a < d; ++a) acc += rt[a] * sb[static_cast<std::size_t>(a) * d + b];
                ot[b] += acc;
            }
            for (int a = 0; a < d; ++a) {
                const S wa = wt[a];
                const S ka = kt[a];
                S* row = sb.data() + static_cast<std::size_t>(a) * d;
                for (int b = 0; b < d; ++b) row[b] = wa * row[b] + ka * vt[b];
            }
        }
    }
}

// Reverse-mode rules for biwkv_scan. g is d(loss)/d(out); the saved
// pre-update states from the forward call are required. Gradients are
// accumulated into dr..du.
void biwkv_scan_backward(std::int64_t t_len, int heads, int d, const double* r, const double* k,
                         const double* v, const double* w, const double* u, const double* g,
                         const double* state_fwd, const double* state_bwd, double* dr, double* dk,
                         double* dv, double* dw, double* du, bool bidirectional = true);

// Row-at-a-time softmax attention, the quadratic yardstick the scan is
// benchmarked against. Same layouts as above.
template <typename S>
void quadratic_attention_reference(std::int64_t t_len, int heads, int d, const S* r, const S* k,
                                   const S* v, S* out) {
    const std::int64_t c = static_cast<std::int64_t>(heads) * d;
    const S scale = S(1) / std::sqrt(static_cast<S>(d));
    std::vector<S> score(static_cast<std::size_t>(t_len));
    for (int h = 0; h < heads; ++h) {
        const std::int64_t off = static_cast<std::int64_t>(h) * d;
        for (std::int64_t t = 0; t < t_len; ++t) {
            const S* rt = r + t * c + off;
            S mx = S(-1e30);
            for (std::int64_t i = 0; i < t_len; ++i) {
                const S* ki = k + i * c + off;
                S acc = S(0);
                for (int a = 0; a < d; ++a) acc += rt[a] * ki[a];
                acc *= scale;
                score[static_cast<std::size_t>(i)] = acc;
                if (acc > mx) mx = acc;
            }
            S z = S(0);
            for (std::int64_t i = 0; i < t_len; ++i) {
                score[static_cast<std::size_t>(i)] = std::exp(score[static_cast<std::size_t>(i)] - mx);
                z += score[static_cast<std::size_t>(i)];
            }
            const S inv_z = S(1) / z;
            S* ot = out + t * c + off;
            for (int b = 0; b < d; ++b) ot[b] = S(0);
            for (std::int64_t i = 0; i < t_len; ++i) {
                const S p = score[static_cast<std::size_t>(i)] * inv_z;
                const S* vi = v + i * c + off;
                for (int b = 0; b < d; ++b) ot[b] += p * vi[b];
            }
        }
    }
}

// ---- analytic FLOP models -----------------------------------------------
// One multiply-add counts as two FLOPs. These are closed-form in (T, C, H)
// and mirror the kernels above term by term.

// scan: per token per head, state decay+update (4 D^2), two readouts
// (2 * 2 D^2), self-boost (3 D)
inline std::uint64_t flops_biwkv_scan(std::uint64_t t, std::uint64_t c, std::uint64_t h) {
    const std::uint64_t d = c / h;
    return t * h * (8 * d * d + 4 * d * d + 3 * d);
}

// quadratic attention core: scores (2 T D), softmax (~5 T), weighted value
// sum (2 T D) for each of T rows and H heads
inline std::uint64_t flops_quadratic_attention(std::uint64_t t, std::uint64_t c, std::uint64_t h) {
    const std::uint64_t d = c / h;
    return t * t * h * (4 * d + 5);
}

// Full spatial-mixing FLOPs: pre-norm, shared BQE shift star, five shift
// mixes, four projections, the low-rank decay net applied twice, the scan,
// gate/readout norm, and the output projection. Every term is linear in T.
inline std::uint64_t flops_spatial_mixing(std::uint64_t t, std::uint64_t c, std::uint64_t h,
                                          std::uint64_t d_lora) {
    const std::uint64_t layernorm = 8 * t * c;
    const std::uint64_t bqe_star = t * c;            // gather of the four quarters
    const std::uint64_t bqe_mix = 5 * 3 * t * c;     // x + (1-mu) * x_star, five streams
    const std::uint64_t projections = 4 * (2 * t * c * c + t * c);
    const std::uint64_t decay_net = 2 * (2 * t * c * d_lora + t * d_lora + 2 * t * d_lora * c + t * c);
    const std::uint64_t decay_exp = 4 * t * c;       // exp(-exp(d)) and the extra shift mix
    const std::uint64_t scan = flops_biwkv_scan(t, c, h);
    const std::uint64_t gate = 5 * t * c + 8 * t * c + t * c;  // silu, head norm, product
    const std::uint64_t out_proj = 2 * t * c * c + t * c;
    return layernorm + bqe_star + bqe_mix + projections + decay_net + decay_exp + scan + gate +
           out_proj;
}

}  // namespace prwkv::wkv
