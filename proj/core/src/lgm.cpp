#include "prwkv/lgm.hpp"

#include <cmath>
#include <stdexcept>

namespace prwkv {

namespace {

Tensor init_affine(ParamStore& store, const std::string& prefix, int in, int out, Rng& rng,
                   Tensor& bias, double scale = 1.0) {
    std::vector<double> w(static_cast<std::size_t>(in) * out);
    const double std = scale / std::sqrt(static_cast<double>(in));
    for (double& v : w) v = rng.normal(0.0, std);
    Tensor weight = store.add(prefix + ".w", Tensor::from_data({in, out}, std::move(w)));
    bias = store.add(prefix + ".b", Tensor::zeros({out}));
    return weight;
}

}  // namespace

LgmParams LgmParams::init(ParamStore& store, const std::string& prefix, int c, int iterations,
                          double radius, bool tied, Rng& rng) {
    if (iterations < 0) throw std::invalid_argument("lgm: iteration count must be non-negative");
    if (!(radius > 0.0)) throw std::invalid_argument("lgm: radius must be positive");
    LgmParams p;
    p.iterations = iterations;
    p.radius = radius;
    const int copies = tied ? 1 : std::max(iterations, 1);
    for (int t = 0; t < copies; ++t) {
        const std::string ip = tied ? prefix : prefix + ".it" + std::to_string(t);
        LgmIterationParams lp;
        lp.f_w = init_affine(store, ip + ".f", 3 + c, c, rng, lp.f_b);
        lp.g_w = init_affine(store, ip + ".g", 2 * c, c, rng, lp.g_b);
        // small offsets at the start keep early iterations close to the
        // plain relative-coordinate form
        lp.h_w = init_affine(store, ip + ".h", c, 3, rng, lp.h_b, 0.01);
        p.iters.push_back(std::move(lp));
    }
    return p;
}

Tensor lgm_forward_graph(const std::vector<double>& anchors, const RadiusGraph& graph,
                         const Tensor& feats, const LgmParams& p) {
    if (feats.rank() != 2) throw std::invalid_argument("lgm: expected [V x C] features");
    const std::int64_t v_count = feats.dim(0);
    if (static_cast<std::int64_t>(anchors.size()) != v_count * 3)
        throw std::invalid_argument("lgm: anchor/feature count mismatch");

    Tensor v = feats;
    if (p.iterations == 0 || graph.vertex_count == 0) return v;

    const std::int64_t e_count = static_cast<std::int64_t>(graph.edges.size());
    std::vector<std::int64_t> src(static_cast<std::size_t>(e_count));
    std::vector<std::int64_t> dst(static_cast<std::size_t>(e_count));
    std::vector<double> rel(static_cast<std::size_t>(e_count) * 3);
    for (std::int64_t e = 0; e < e_count; ++e) {
        const auto [i, j] = graph.edges[static_cast<std::size_t>(e)];
        dst[static_cast<std::size_t>(e)] = i;
        src[static_cast<std::size_t>(e)] = j;
        for (int a = 0; a < 3; ++a)
            rel[e * 3 + a] = anchors[static_cast<std::size_t>(j) * 3 + a] -
                             anchors[static_cast<std::size_t>(i) * 3 + a];
    }

    for (int t = 0; t < p.iterations; ++t) {
        const LgmIterationParams& lp = p.at(t);
        Tensor edge_in_pos;
        if (e_count > 0) {
            Tensor rel_t = Tensor::from_data({e_count, 3}, rel);
            if (p.stabilizer) {
                Tensor offset = add_bias(matmul(v, lp.h_w), lp.h_b);  // V x 3
                edge_in_pos = add(rel_t, gather_rows(offset, dst));
            } else {
                edge_in_pos = rel_t;
            }
            Tensor edge_in = concat_last_axis({edge_in_pos, gather_rows(v, src)});
            Tensor edge_feat = silu(add_bias(matmul(edge_in, lp.f_w), lp.f_b));
            Tensor agg = p.mean_aggregate ? segment_mean(edge_feat, dst, v_count)
                                          : segment_max(edge_feat, dst, v_count);
            Tensor updated = silu(add_bias(matmul(concat_last_axis({agg, v}), lp.g_w), lp.g_b));
            v = add(updated, v);
        } else {
            // no edges anywhere: every vertex sees the zero aggregate
            Tensor agg = Tensor::zeros({v_count, feats.dim(1)});
            Tensor updated = silu(add_bias(matmul(concat_last_axis({agg, v}), lp.g_w), lp.g_b));
            v = add(updated, v);
        }
    }
    return v;
}

Tensor lgm_forward(const std::vector<double>& anchors, const Tensor& feats, const LgmParams& p) {
    const std::int64_t v_count = feats.dim(0);
    RadiusGraph graph = radius_graph_celllist(anchors.data(), v_count, p.radius);
    return lgm_forward_graph(anchors, graph, feats, p);
}

bool lgm_translation_check(const std::vector<double>& anchors, const Tensor& feats,
                           const std::array<double, 3>& delta, const LgmParams& p, double tol) {
    NoGradGuard ng;
    Tensor base = lgm_forward(anchors, feats, p);
    std::vector<double> shifted(anchors);
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += delta[i % 3];
    Tensor moved = lgm_forward(shifted, feats, p);
    for (std::size_t i = 0; i < base.data().size(); ++i) {
        if (std::abs(base.data()[i] - moved.data()[i]) > tol) return false;
    }
    return true;
}

}  // namespace prwkv
