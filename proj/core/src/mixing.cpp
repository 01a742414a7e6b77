#include "prwkv/mixing.hpp"

#include <cmath>
#include <stdexcept>

#include "prwkv/wkv.hpp"

namespace prwkv {

GridShiftMap make_grid_shift_map(std::int64_t t, bool grid2d) {
    if (t < 1) throw std::invalid_argument("grid shift map needs at least one token");
    GridShiftMap map;
    map.t = t;
    if (grid2d) {
        map.rows = static_cast<std::int64_t>(std::ceil(std::sqrt(static_cast<double>(t))));
        map.cols = (t + map.rows - 1) / map.rows;
    } else {
        map.rows = t;
        map.cols = 1;
    }
    for (auto& q : map.source) q.assign(static_cast<std::size_t>(t), -1);
    for (std::int64_t i = 0; i < t; ++i) {
        const std::int64_t r = i / map.cols;
        const std::int64_t c = i % map.cols;
        if (r > 0) map.source[0][static_cast<std::size_t>(i)] = i - map.cols;
        if (r + 1 < map.rows && i + map.cols < t) map.source[1][static_cast<std::size_t>(i)] = i + map.cols;
        if (c > 0) map.source[2][static_cast<std::size_t>(i)] = i - 1;
        if (c + 1 < map.cols && i + 1 < t) map.source[3][static_cast<std::size_t>(i)] = i + 1;
    }
    return map;
}

Tensor bqe_star(const Tensor& x, const GridShiftMap& map) {
    if (x.rank() != 2) throw std::invalid_argument("bqe: expected [T x C] tokens");
    const std::int64_t c = x.dim(1);
    if (c % 4 != 0)
        throw std::invalid_argument("bqe: channel width " + std::to_string(c) + " not divisible by 4");
    if (x.dim(0) != map.t) throw std::invalid_argument("bqe: shift map built for a different T");
    const std::int64_t q = c / 4;
    std::vector<Tensor> quarters;
    quarters.reserve(4);
    for (int i = 0; i < 4; ++i) {
        Tensor shifted = gather_rows(x, map.source[static_cast<std::size_t>(i)]);
        quarters.push_back(slice_last_axis(shifted, i * q, (i + 1) * q));
    }
    return concat_last_axis(quarters);
}

namespace {

Tensor bqe_with_star(const Tensor& x, const Tensor& mu, const Tensor& star, const MixOptions& opt) {
    if (!opt.bqe) return x;
    Tensor one_minus_mu = add_scalar(neg(mu), 1.0);
    Tensor mixed = scale_cols(star, one_minus_mu);
    if (opt.bqe_lerp) return add(scale_cols(x, mu), mixed);
    return add(x, mixed);
}

Tensor decay_with_star(const Tensor& x, const Tensor& star, const SpatialMixParams& p,
                       const MixOptions& opt) {
    auto nu = [&](const Tensor& in) {
        return add_bias(matmul(tanh_op(matmul(in, p.a_x)), p.b_x), p.lambda_x);
    };
    Tensor z = bqe_with_star(x, p.mu_w, star, opt);
    Tensor d;
    if (opt.bqe) {
        Tensor w_shift = add(x, mul(star, add_scalar(neg(nu(z)), 1.0)));
        d = nu(w_shift);
    } else {
        d = nu(z);
    }
    return exp_op(neg(exp_op(d)));
}

void init_ln(ParamStore& store, const std::string& prefix, int c, Tensor& gamma, Tensor& beta) {
    gamma = store.add(prefix + ".gamma", Tensor::full({c}, 1.0));
    beta = store.add(prefix + ".beta", Tensor::zeros({c}));
}

Tensor init_matrix(ParamStore& store, const std::string& name, int in, int out, Rng& rng) {
    std::vector<double> w(static_cast<std::size_t>(in) * out);
    const double std = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : w) v = rng.normal(0.0, std);
    return store.add(name, Tensor::from_data({in, out}, std::move(w)));
}

}  // namespace

SpatialMixParams SpatialMixParams::init(ParamStore& store, const std::string& prefix, int c,
                                        int heads, int d_lora, Rng& rng) {
    if (heads < 1 || c % heads != 0)
        throw std::invalid_argument("spatial mixing: width " + std::to_string(c) +
                                    " not divisible by " + std::to_string(heads) + " heads");
    SpatialMixParams p;
    p.heads = heads;
    init_ln(store, prefix + ".ln", c, p.ln_gamma, p.ln_beta);
    p.mu_r = store.add(prefix + ".mu_r", Tensor::full({c}, 0.5));
    p.mu_k = store.add(prefix + ".mu_k", Tensor::full({c}, 0.5));
    p.mu_v = store.add(prefix + ".mu_v", Tensor::full({c}, 0.5));
    p.mu_g = store.add(prefix + ".mu_g", Tensor::full({c}, 0.5));
    p.mu_w = store.add(prefix + ".mu_w", Tensor::full({c}, 0.5));
    // spread of decay windows: w = exp(-exp(lambda)) from ~0.98 to ~0.55
    std::vector<double> lam(static_cast<std::size_t>(c));
    for (int i = 0; i < c; ++i)
        lam[static_cast<std::size_t>(i)] = -4.0 + 3.5 * (c > 1 ? static_cast<double>(i) / (c - 1) : 0.0);
    p.lambda_x = store.add(prefix + ".lambda_x", Tensor::from_data({c}, std::move(lam)));
    {
        std::vector<double> a(static_cast<std::size_t>(c) * d_lora), b(static_cast<std::size_t>(d_lora) * c);
        for (double& v : a) v = rng.normal(0.0, 0.01);
        for (double& v : b) v = rng.normal(0.0, 0.01);
        p.a_x = store.add(prefix + ".a_x", Tensor::from_data({c, d_lora}, std::move(a)));
        p.b_x = store.add(prefix + ".b_x", Tensor::from_data({d_lora, c}, std::move(b)));
    }
    std::vector<double> uv(static_cast<std::size_t>(c));
    for (int i = 0; i < c; ++i)
        uv[static_cast<std::size_t>(i)] = 0.2 + 0.6 * (c > 1 ? static_cast<double>(i) / (c - 1) : 0.0);
    p.u = store.add(prefix + ".u", Tensor::from_data({c}, std::move(uv)));
    p.w_r = init_matrix(store, prefix + ".w_r", c, c, rng);
    p.b_r = store.add(prefix + ".b_r", Tensor::zeros({c}));
    p.w_k = init_matrix(store, prefix + ".w_k", c, c, rng);
    p.b_k = store.add(prefix + ".b_k", Tensor::zeros({c}));
    p.w_v = init_matrix(store, prefix + ".w_v", c, c, rng);
    p.b_v = store.add(prefix + ".b_v", Tensor::zeros({c}));
    p.w_g = init_matrix(store, prefix + ".w_g", c, c, rng);
    p.b_g = store.add(prefix + ".b_g", Tensor::zeros({c}));
    p.w_o = init_matrix(store, prefix + ".w_o", c, c, rng);
    p.b_o = store.add(prefix + ".b_o", Tensor::zeros({c}));
    init_ln(store, prefix + ".head_ln", c, p.head_ln_gamma, p.head_ln_beta);
    return p;
}

ChannelMixParams ChannelMixParams::init(ParamStore& store, const std::string& prefix, int c,
                                        int hidden_ratio, Rng& rng) {
    ChannelMixParams p;
    const int hidden = c * hidden_ratio;
    init_ln(store, prefix + ".ln", c, p.ln_gamma, p.ln_beta);
    p.mu_r = store.add(prefix + ".mu_r", Tensor::full({c}, 0.5));
    p.mu_k = store.add(prefix + ".mu_k", Tensor::full({c}, 0.5));
    p.w_r = init_matrix(store, prefix + ".w_r", c, c, rng);
    p.b_r = store.add(prefix + ".b_r", Tensor::zeros({c}));
    p.w_k = init_matrix(store, prefix + ".w_k", c, hidden, rng);
    p.b_k = store.add(prefix + ".b_k", Tensor::zeros({hidden}));
    p.w_v = init_matrix(store, prefix + ".w_v", hidden, c, rng);
    p.b_v = store.add(prefix + ".b_v", Tensor::zeros({c}));
    p.w_o = init_matrix(store, prefix + ".w_o", c, c, rng);
    p.b_o = store.add(prefix + ".b_o", Tensor::zeros({c}));
    return p;
}

Tensor bqe(const Tensor& x, const Tensor& mu, const GridShiftMap& map, const MixOptions& opt) {
    if (!opt.bqe) return x;
    return bqe_with_star(x, mu, bqe_star(x, map), opt);
}

Tensor bqe(const Tensor& x, const Tensor& mu, const MixOptions& opt) {
    if (!opt.bqe) return x;
    return bqe(x, mu, make_grid_shift_map(x.dim(0), opt.bqe_grid2d), opt);
}

Tensor compute_decay(const Tensor& x, const SpatialMixParams& p, const MixOptions& opt) {
    Tensor star;
    if (opt.bqe) star = bqe_star(x, make_grid_shift_map(x.dim(0), opt.bqe_grid2d));
    return decay_with_star(x, star, p, opt);
}

Tensor biwkv(const Tensor& r, const Tensor& k, const Tensor& v, const Tensor& w, const Tensor& u,
             int heads, bool bidirectional) {
    if (r.rank() != 2) throw std::invalid_argument("biwkv: expected [T x C] inputs");
    const std::int64_t t_len = r.dim(0), c = r.dim(1);
    for (const Tensor* in : {&k, &v, &w}) {
        if (in->shape() != r.shape())
            throw std::invalid_argument("biwkv: shape mismatch " + shape_str(r.shape()) + " vs " +
                                        shape_str(in->shape()));
    }
    if (u.numel() != c)
        throw std::invalid_argument("biwkv: boost width " + shape_str(u.shape()) +
                                    " does not match channels " + std::to_string(c));
    if (heads < 1 || c % heads != 0)
        throw std::invalid_argument("biwkv: width " + std::to_string(c) + " not divisible by " +
                                    std::to_string(heads) + " heads");
    const int d = static_cast<int>(c / heads);

    const bool track = grad_enabled() && (r.requires_grad() || k.requires_grad() ||
                                          v.requires_grad() || w.requires_grad() || u.requires_grad());
    std::vector<double> out(static_cast<std::size_t>(t_len * c));
    std::shared_ptr<std::vector<double>> sf, sb;
    if (track) {
        sf = std::make_shared<std::vector<double>>(static_cast<std::size_t>(heads) * t_len * d * d);
        sb = std::make_shared<std::vector<double>>(static_cast<std::size_t>(heads) * t_len * d * d);
    }
    wkv::biwkv_scan(t_len, heads, d, r.data().data(), k.data().data(), v.data().data(),
                    w.data().data(), u.data().data(), out.data(), bidirectional,
                    sf ? sf->data() : nullptr, sb ? sb->data() : nullptr);

    return make_custom_op(
        "biwkv", {t_len, c}, std::move(out), {r, k, v, w, u},
        [t_len, heads, d, c, sf, sb, bidirectional](TensorNode& n) {
            TensorNode& pr = *n.parents[0];
            TensorNode& pk = *n.parents[1];
            TensorNode& pv = *n.parents[2];
            TensorNode& pw = *n.parents[3];
            TensorNode& pu = *n.parents[4];
            std::vector<double> dr(static_cast<std::size_t>(t_len * c), 0.0), dk = dr, dv = dr, dw = dr;
            std::vector<double> du(static_cast<std::size_t>(c), 0.0);
            wkv::biwkv_scan_backward(t_len, heads, d, pr.value.data(), pk.value.data(),
                                     pv.value.data(), pw.value.data(), pu.value.data(),
                                     n.grad.data(), sf->data(), sb->data(), dr.data(), dk.data(),
                                     dv.data(), dw.data(), du.data(), bidirectional);
            if (pr.requires_grad) pr.accumulate_grad(dr.data(), t_len * c);
            if (pk.requires_grad) pk.accumulate_grad(dk.data(), t_len * c);
            if (pv.requires_grad) pv.accumulate_grad(dv.data(), t_len * c);
            if (pw.requires_grad) pw.accumulate_grad(dw.data(), t_len * c);
            if (pu.requires_grad) pu.accumulate_grad(du.data(), c);
        });
}

Tensor spatial_mixing(const Tensor& x, const SpatialMixParams& p, const MixOptions& opt) {
    if (x.rank() != 2) throw std::invalid_argument("spatial_mixing: expected [T x C] tokens");
    const std::int64_t c = x.dim(1);
    if (c % p.heads != 0)
        throw std::invalid_argument("spatial_mixing: width " + std::to_string(c) +
                                    " not divisible by " + std::to_string(p.heads) + " heads");
    if (opt.bqe && c % 4 != 0)
        throw std::invalid_argument("spatial_mixing: width " + std::to_string(c) +
                                    " not divisible by 4 (required by the shift quarters)");
    Tensor xn = layernorm(x, p.ln_gamma, p.ln_beta);
    Tensor star;
    GridShiftMap map;
    if (opt.bqe) {
        map = make_grid_shift_map(x.dim(0), opt.bqe_grid2d);
        star = bqe_star(xn, map);
    }
    Tensor r = add_bias(matmul(bqe_with_star(xn, p.mu_r, star, opt), p.w_r), p.b_r);
    Tensor k = add_bias(matmul(bqe_with_star(xn, p.mu_k, star, opt), p.w_k), p.b_k);
    Tensor v = add_bias(matmul(bqe_with_star(xn, p.mu_v, star, opt), p.w_v), p.b_v);
    Tensor g = add_bias(matmul(bqe_with_star(xn, p.mu_g, star, opt), p.w_g), p.b_g);
    Tensor w = decay_with_star(xn, star, p, opt);
    Tensor o = biwkv(r, k, v, w, p.u, p.heads, opt.bidirectional);
    Tensor gated = mul(silu(g), head_layernorm(o, p.heads, p.head_ln_gamma, p.head_ln_beta));
    return add_bias(matmul(gated, p.w_o), p.b_o);
}

Tensor channel_mixing(const Tensor& x, const ChannelMixParams& p, const MixOptions& opt) {
    if (x.rank() != 2) throw std::invalid_argument("channel_mixing: expected [T x C] tokens");
    Tensor xn = layernorm(x, p.ln_gamma, p.ln_beta);
    Tensor star;
    if (opt.bqe) star = bqe_star(xn, make_grid_shift_map(x.dim(0), opt.bqe_grid2d));
    Tensor r = add_bias(matmul(bqe_with_star(xn, p.mu_r, star, opt), p.w_r), p.b_r);
    Tensor k = add_bias(matmul(bqe_with_star(xn, p.mu_k, star, opt), p.w_k), p.b_k);
    Tensor value = add_bias(matmul(squared_relu(k), p.w_v), p.b_v);
    return add_bias(matmul(mul(sigmoid(r), value), p.w_o), p.b_o);
}

}  // namespace prwkv

// ---- scan backward ----------------------------------------------------------

namespace prwkv::wkv {

void biwkv_scan_backward(std::int64_t t_len, int heads, int d, const double* r, const double* k,
                         const double* v, const double* w, const double* u, const double* g,
                         const double* state_fwd, const double* state_bwd, double* dr, double* dk,
                         double* dv, double* dw, double* du, bool bidirectional) {
    const std::int64_t c = static_cast<std::int64_t>(heads) * d;
    const std::int64_t dd = static_cast<std::int64_t>(d) * d;
    std::vector<double> adj(static_cast<std::size_t>(dd));
    for (int h = 0; h < heads; ++h) {
        const std::int64_t off = static_cast<std::int64_t>(h) * d;
        const std::int64_t stoff = static_cast<std::int64_t>(h) * t_len * dd;

        // dr and the self-term grads need only local quantities
        for (std::int64_t t = 0; t < t_len; ++t) {
            const double* rt = r + t * c + off;
            const double* kt = k + t * c + off;
            const double* vt = v + t * c + off;
            const double* gt = g + t * c + off;
            const double* sft = state_fwd + stoff + t * dd;
            const double* sbt = state_bwd + stoff + t * dd;
            double gv = 0.0;
            for (int b = 0; b < d; ++b) gv += gt[b] * vt[b];
            double ukr = 0.0;
            for (int a = 0; a < d; ++a) ukr += u[off + a] * kt[a] * rt[a];
            for (int a = 0; a < d; ++a) {
                const double* sfa = sft + static_cast<std::int64_t>(a) * d;
                const double* sba = sbt + static_cast<std::int64_t>(a) * d;
                double acc = 0.0;
                for (int b = 0; b < d; ++b) acc += (sfa[b] + sba[b]) * gt[b];
                dr[t * c + off + a] += acc + u[off + a] * kt[a] * gv;
                du[off + a] += kt[a] * rt[a] * gv;
                dk[t * c + off + a] += u[off + a] * rt[a] * gv;
            }
            for (int b = 0; b < d; ++b) dv[t * c + off + b] += gt[b] * ukr;
        }

        // adjoint of the forward-state chain, walked from the end
        std::fill(adj.begin(), adj.end(), 0.0);
        for (std::int64_t t = t_len - 1; t >= 0; --t) {
            const double* rt = r + t * c + off;
            const double* kt = k + t * c + off;
            const double* vt = v + t * c + off;
            const double* wt = w + t * c + off;
            const double* gt = g + t * c + off;
            const double* sft = state_fwd + stoff + t * dd;
            for (int a = 0; a < d; ++a) {
                double* adja = adj.data() + static_cast<std::int64_t>(a) * d;
                const double* sfa = sft + static_cast<std::int64_t>(a) * d;
                double acc_k = 0.0, acc_w = 0.0;
                for (int b = 0; b < d; ++b) {
                    acc_k += adja[b] * vt[b];
                    acc_w += adja[b] * sfa[b];
                    dv[t * c + off + b] += adja[b] * kt[a];
                }
                dk[t * c + off + a] += acc_k;
                dw[t * c + off + a] += acc_w;
                // P_t = G_t + diag(w_t) P_{t+1}
                for (int b = 0; b < d; ++b) adja[b] = rt[a] * gt[b] + wt[a] * adja[b];
            }
        }

        if (!bidirectional) continue;

        // adjoint of the backward-state chain, walked from the front
        std::fill(adj.begin(), adj.end(), 0.0);
        for (std::int64_t t = 0; t < t_len; ++t) {
            const double* rt = r + t * c + off;
            const double* kt = k + t * c + off;
            const double* vt = v + t * c + off;
            const double* wt = w + t * c + off;
            const double* gt = g + t * c + off;
            const double* sbt = state_bwd + stoff + t * dd;
            for (int a = 0; a < d; ++a) {
                double* adja = adj.data() + static_cast<std::int64_t>(a) * d;
                const double* sba = sbt + static_cast<std::int64_t>(a) * d;
                double acc_k = 0.0, acc_w = 0.0;
                for (int b = 0; b < d; ++b) {
                    acc_k += adja[b] * vt[b];
                    acc_w += adja[b] * sba[b];
                    dv[t * c + off + b] += adja[b] * kt[a];
                }
                dk[t * c + off + a] += acc_k;
                dw[t * c + off + a] += acc_w;
                // Q_t = G_t + diag(w_t) Q_{t-1}
                for (int b = 0; b < d; ++b) adja[b] = rt[a] * gt[b] + wt[a] * adja[b];
            }
        }
    }
}

}  // namespace prwkv::wkv
