#include "prwkv/embed.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace prwkv {

namespace {

Tensor init_affine(ParamStore& store, const std::string& prefix, int in, int out, Rng& rng,
                   Tensor& bias) {
    std::vector<double> w(static_cast<std::size_t>(in) * out);
    const double std = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : w) v = rng.normal(0.0, std);
    Tensor weight = store.add(prefix + ".w", Tensor::from_data({in, out}, std::move(w)));
    bias = store.add(prefix + ".b", Tensor::zeros({out}));
    return weight;
}

}  // namespace

MiniPointNetParams MiniPointNetParams::init(ParamStore& store, const std::string& prefix, int c,
                                            Rng& rng) {
    if (c < 2) throw std::invalid_argument("mini_pointnet: width must be at least 2");
    MiniPointNetParams p;
    p.w1 = init_affine(store, prefix + ".l1", 3, c / 2, rng, p.b1);
    p.w2 = init_affine(store, prefix + ".l2", c / 2, c, rng, p.b2);
    p.w3 = init_affine(store, prefix + ".out", c, c, rng, p.b3);
    return p;
}

PosEncParams PosEncParams::init(ParamStore& store, const std::string& prefix, int hidden, int c,
                                Rng& rng) {
    PosEncParams p;
    p.w1 = init_affine(store, prefix + ".l1", 3, hidden, rng, p.b1);
    p.w2 = init_affine(store, prefix + ".l2", hidden, c, rng, p.b2);
    return p;
}

ScaleEmbedParams ScaleEmbedParams::init(ParamStore& store, const std::string& prefix, int c,
                                        int pe_hidden, Rng& rng) {
    ScaleEmbedParams p;
    p.pointnet = MiniPointNetParams::init(store, prefix + ".pn", c, rng);
    p.pos = PosEncParams::init(store, prefix + ".pe", pe_hidden, c, rng);
    return p;
}

Tensor mini_pointnet_batch(const Tensor& points, const std::vector<std::int64_t>& seg,
                           std::int64_t t, const MiniPointNetParams& p) {
    if (points.rank() != 2 || points.dim(1) != 3)
        throw std::invalid_argument("mini_pointnet: expected [n x 3] offsets");
    if (points.dim(0) == 0) throw std::invalid_argument("mini_pointnet: empty patch");
    Tensor h = silu(add_bias(matmul(points, p.w1), p.b1));
    h = silu(add_bias(matmul(h, p.w2), p.b2));
    Tensor pooled = segment_max(h, seg, t);
    return add_bias(matmul(pooled, p.w3), p.b3);
}

Tensor mini_pointnet(const Tensor& patch, const MiniPointNetParams& p) {
    std::vector<std::int64_t> seg(static_cast<std::size_t>(patch.dim(0)), 0);
    Tensor out = mini_pointnet_batch(patch, seg, 1, p);  // [1 x C]
    return reshape(out, {out.dim(1)});
}

Tensor positional_encoding(const Tensor& anchors, const PosEncParams& p) {
    return add_bias(matmul(silu(add_bias(matmul(anchors, p.w1), p.b1)), p.w2), p.b2);
}

TokenSequence embed_scale(const ScalePyramid& pyr, std::int64_t scale, const ScaleEmbedParams& p) {
    const auto& sc = pyr.scales[static_cast<std::size_t>(scale)];
    const std::vector<std::int64_t> vis = pyr.visible_indices(scale);
    const std::int64_t t = static_cast<std::int64_t>(vis.size());
    if (t == 0) throw std::invalid_argument("embed_scale: no visible points at scale " + std::to_string(scale));

    TokenSequence seq;
    seq.scale_id = static_cast<int>(scale);
    seq.point_index = vis;
    seq.anchors.resize(static_cast<std::size_t>(t) * 3);
    for (std::int64_t i = 0; i < t; ++i) {
        const double* c = sc.coords.data() + vis[static_cast<std::size_t>(i)] * 3;
        seq.anchors[i * 3] = c[0];
        seq.anchors[i * 3 + 1] = c[1];
        seq.anchors[i * 3 + 2] = c[2];
    }

    // patch member coordinates, relative to the center
    std::vector<double> rel;
    std::vector<std::int64_t> seg;
    if (scale == 0) {
        // group within the visible subset only; masked points stay unread
        const int k_eff = static_cast<int>(std::min<std::int64_t>(sc.k, t));
        std::vector<std::int64_t> nbr = knn(seq.anchors.data(), t, seq.anchors.data(), t, k_eff);
        rel.resize(static_cast<std::size_t>(t) * k_eff * 3);
        seg.resize(static_cast<std::size_t>(t) * k_eff);
        for (std::int64_t i = 0; i < t; ++i) {
            const double* center = seq.anchors.data() + i * 3;
            for (int j = 0; j < k_eff; ++j) {
                const double* q = seq.anchors.data() + nbr[static_cast<std::size_t>(i) * k_eff + j] * 3;
                const std::int64_t row = i * k_eff + j;
                rel[row * 3] = q[0] - center[0];
                rel[row * 3 + 1] = q[1] - center[1];
                rel[row * 3 + 2] = q[2] - center[2];
                seg[static_cast<std::size_t>(row)] = i;
            }
        }
    } else {
        const auto& prev = pyr.scales[static_cast<std::size_t>(scale - 1)];
        const int k = sc.k;
        rel.resize(static_cast<std::size_t>(t) * k * 3);
        seg.resize(static_cast<std::size_t>(t) * k);
        for (std::int64_t i = 0; i < t; ++i) {
            const std::int64_t pi = vis[static_cast<std::size_t>(i)];
            const double* center = seq.anchors.data() + i * 3;
            for (int j = 0; j < k; ++j) {
                const std::int64_t nj = sc.neighbors[static_cast<std::size_t>(pi) * k + j];
                const double* q = prev.coords.data() + nj * 3;
                const std::int64_t row = i * static_cast<std::int64_t>(k) + j;
                rel[row * 3] = q[0] - center[0];
                rel[row * 3 + 1] = q[1] - center[1];
                rel[row * 3 + 2] = q[2] - center[2];
                seg[static_cast<std::size_t>(row)] = i;
            }
        }
    }

    Tensor patch_pts = Tensor::from_data({static_cast<std::int64_t>(seg.size()), 3}, std::move(rel));
    Tensor patch_emb = mini_pointnet_batch(patch_pts, seg, t, p.pointnet);
    Tensor anchors_t = Tensor::from_data({t, 3}, seq.anchors);
    seq.tokens = add(patch_emb, positional_encoding(anchors_t, p.pos));
    return seq;
}

}  // namespace prwkv
