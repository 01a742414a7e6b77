#include "prwkv/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace prwkv {

int ModelConfig::encoder_depth() const {
    return std::accumulate(blocks_per_stage.begin(), blocks_per_stage.end(), 0);
}

int ModelConfig::decoder_depth() const {
    return std::accumulate(decoder_blocks_per_stage.begin(), decoder_blocks_per_stage.end(), 0);
}

MixOptions ModelConfig::mix_options() const {
    MixOptions opt;
    opt.bqe = use_bqe;
    opt.bqe_lerp = bqe_lerp;
    opt.bqe_grid2d = bqe_grid2d;
    opt.bidirectional = bidirectional;
    return opt;
}

void ModelConfig::validate() const {
    const std::size_t m = scale_sizes.size();
    if (m == 0) throw std::invalid_argument("config: at least one scale required");
    if (ks.size() != m) throw std::invalid_argument("config: ks must pair with scales");
    if (blocks_per_stage.size() != m)
        throw std::invalid_argument("config: blocks must list one entry per scale");
    if (decoder_blocks_per_stage.size() != m)
        throw std::invalid_argument("config: decoder_blocks must list one entry per scale");
    if (lgm_radius.size() != m)
        throw std::invalid_argument("config: lgm_radius must list one entry per scale");
    for (std::size_t s = 1; s < m; ++s) {
        if (scale_sizes[s] >= scale_sizes[s - 1])
            throw std::invalid_argument("config: scales must strictly decrease");
    }
    if (width < 2 || heads < 1 || width % heads != 0)
        throw std::invalid_argument("config: width must be divisible by heads");
    if (use_bqe && width % 4 != 0)
        throw std::invalid_argument("config: width must be divisible by 4 when use_bqe is on");
    if (!(mask_ratio >= 0.0) || mask_ratio >= 1.0)
        throw std::invalid_argument("config: mask_ratio must lie in [0, 1)");
    if (classes < 2) throw std::invalid_argument("config: need at least two classes");
    for (int b : blocks_per_stage)
        if (b < 0) throw std::invalid_argument("config: negative block count");
    for (int b : decoder_blocks_per_stage)
        if (b < 0) throw std::invalid_argument("config: negative decoder block count");
    for (double r : lgm_radius)
        if (!(r > 0.0)) throw std::invalid_argument("config: lgm_radius must be positive");
}

BlockParams BlockParams::init(ParamStore& store, const std::string& prefix, const ModelConfig& cfg,
                              double lgm_radius, bool with_lgm, Rng& rng) {
    BlockParams p;
    p.spatial = SpatialMixParams::init(store, prefix + ".sm", cfg.width, cfg.heads, cfg.lora_dim(), rng);
    p.channel = ChannelMixParams::init(store, prefix + ".cm", cfg.width, cfg.hidden_ratio, rng);
    p.has_lgm = with_lgm;
    if (with_lgm) {
        p.lgm = LgmParams::init(store, prefix + ".lgm", cfg.width, cfg.lgm_iterations, lgm_radius,
                                cfg.lgm_tied, rng);
        p.lgm.stabilizer = cfg.use_stabilizer;
        p.lgm.mean_aggregate = cfg.lgm_mean_aggregate;
        std::vector<double> w(static_cast<std::size_t>(2 * cfg.width) * cfg.width);
        const double std = 1.0 / std::sqrt(static_cast<double>(2 * cfg.width));
        for (double& v : w) v = rng.normal(0.0, std);
        p.fuse_w = store.add(prefix + ".fuse.w", Tensor::from_data({2 * cfg.width, cfg.width}, std::move(w)));
        p.fuse_b = store.add(prefix + ".fuse.b", Tensor::zeros({cfg.width}));
    }
    return p;
}

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

// max-pool the k nearest source tokens onto each destination anchor
Tensor knn_maxpool(const std::vector<double>& src_anchors, const Tensor& src_tokens,
                   const std::vector<double>& dst_anchors, int k) {
    const std::int64_t n_src = static_cast<std::int64_t>(src_anchors.size() / 3);
    const std::int64_t n_dst = static_cast<std::int64_t>(dst_anchors.size() / 3);
    const int k_eff = static_cast<int>(std::min<std::int64_t>(k, n_src));
    std::vector<std::int64_t> nbr = knn(dst_anchors.data(), n_dst, src_anchors.data(), n_src, k_eff);
    std::vector<std::int64_t> seg(nbr.size());
    for (std::int64_t i = 0; i < n_dst; ++i)
        for (int j = 0; j < k_eff; ++j) seg[static_cast<std::size_t>(i) * k_eff + j] = i;
    return segment_max(gather_rows(src_tokens, nbr), seg, n_dst);
}

}  // namespace

Model build_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Model m;
    m.cfg = cfg;
    Rng rng(derive_seed(seed, 0x6d6f64656cULL));
    const int c = cfg.width;
    const std::int64_t scales = cfg.num_scales();

    for (std::int64_t s = 0; s < scales; ++s) {
        m.embeds.push_back(ScaleEmbedParams::init(m.store, "embed.s" + std::to_string(s), c,
                                                  cfg.pe_hidden, rng));
    }
    for (std::int64_t s = 0; s < scales; ++s) {
        std::vector<BlockParams> blocks;
        for (int b = 0; b < cfg.blocks_per_stage[static_cast<std::size_t>(s)]; ++b) {
            blocks.push_back(BlockParams::init(
                m.store, "enc.s" + std::to_string(s) + ".b" + std::to_string(b), cfg,
                cfg.lgm_radius[static_cast<std::size_t>(s)], cfg.use_lgm, rng));
        }
        m.enc_stages.push_back(std::move(blocks));
    }

    {
        std::vector<double> mt(static_cast<std::size_t>(c));
        for (double& v : mt) v = rng.normal(0.0, 0.02);
        m.mask_token = m.store.add("dec.mask_token", Tensor::from_data({1, c}, std::move(mt)));
    }
    for (std::int64_t s = 0; s < scales; ++s) {
        const std::string sp = "dec.s" + std::to_string(s);
        m.dec_pos.push_back(PosEncParams::init(m.store, sp + ".pe", cfg.pe_hidden, c, rng));
        Tensor sb;
        m.skip_w.push_back(init_affine(m.store, sp + ".skip", c, c, rng, sb));
        m.skip_b.push_back(sb);
        std::vector<BlockParams> blocks;
        for (int b = 0; b < cfg.decoder_blocks_per_stage[static_cast<std::size_t>(s)]; ++b) {
            blocks.push_back(BlockParams::init(m.store, sp + ".b" + std::to_string(b), cfg, 1.0,
                                               /*with_lgm=*/false, rng));
        }
        m.dec_stages.push_back(std::move(blocks));
        Tensor rb;
        m.recon_w.push_back(
            init_affine(m.store, sp + ".recon", c, cfg.ks[static_cast<std::size_t>(s)] * 3, rng, rb));
        m.recon_b.push_back(rb);
    }

    m.final_ln_gamma = m.store.add("final_ln.gamma", Tensor::full({c}, 1.0));
    m.final_ln_beta = m.store.add("final_ln.beta", Tensor::zeros({c}));
    m.head1_w = init_affine(m.store, "head.l1", 2 * c, c, rng, m.head1_b);
    m.head2_w = init_affine(m.store, "head.l2", c, cfg.classes, rng, m.head2_b);
    return m;
}

Tensor prwkv_block(const BlockParams& p, const Tensor& x, const std::vector<double>& anchors,
                   const MixOptions& opt, bool lgm_enabled) {
    Tensor x1 = add(x, spatial_mixing(x, p.spatial, opt));
    Tensor x2 = add(x1, channel_mixing(x1, p.channel, opt));
    if (!lgm_enabled || !p.has_lgm) return x2;
    Tensor local = lgm_forward(anchors, x, p.lgm);
    return add_bias(matmul(concat_last_axis({x2, local}), p.fuse_w), p.fuse_b);
}

ScalePyramid prepare_pyramid(const ModelConfig& cfg, const PointCloud& pc, bool masked,
                             std::uint64_t mask_seed) {
    PointCloud prepared = normalize(pc);
    canonical_order(prepared);
    ScalePyramid pyr = build_pyramid(prepared, cfg.scale_sizes, cfg.ks, 0);
    if (masked) apply_multiscale_mask(pyr, cfg.mask_ratio, mask_seed);
    return pyr;
}

EncoderOutput encoder_forward(const Model& m, const ScalePyramid& pyr) {
    const MixOptions opt = m.cfg.mix_options();
    EncoderOutput out;
    for (std::int64_t s = 0; s < pyr.num_scales(); ++s) {
        TokenSequence seq = embed_scale(pyr, s, m.embeds[static_cast<std::size_t>(s)]);
        Tensor x = seq.tokens;
        if (s > 0) {
            const TokenSequence& finer = out.stages.back();
            x = add(x, knn_maxpool(finer.anchors, finer.tokens, seq.anchors,
                                   m.cfg.ks[static_cast<std::size_t>(s)]));
        }
        for (const BlockParams& b : m.enc_stages[static_cast<std::size_t>(s)]) {
            x = prwkv_block(b, x, seq.anchors, opt, m.cfg.use_lgm);
        }
        seq.tokens = x;
        out.stages.push_back(std::move(seq));
    }
    return out;
}

DecoderOutput decoder_forward(const Model& m, const ScalePyramid& pyr, const EncoderOutput& enc) {
    const MixOptions opt = m.cfg.mix_options();
    const std::int64_t scales = pyr.num_scales();

    DecoderOutput out;
    std::vector<Tensor> chamfer_terms;
    Tensor prev_tokens;
    std::vector<double> prev_anchors;

    for (std::int64_t s = scales - 1; s >= 0; --s) {
        const auto& sc = pyr.scales[static_cast<std::size_t>(s)];
        const std::int64_t t = sc.size;

        // visible slots: projected encoder skip; masked slots: mask token
        const TokenSequence& skip = enc.stages[static_cast<std::size_t>(s)];
        Tensor skip_proj = add_bias(matmul(skip.tokens, m.skip_w[static_cast<std::size_t>(s)]),
                                    m.skip_b[static_cast<std::size_t>(s)]);
        std::vector<std::int64_t> vis_slot(static_cast<std::size_t>(t), -1);
        for (std::int64_t i = 0; i < skip.count(); ++i)
            vis_slot[static_cast<std::size_t>(skip.point_index[static_cast<std::size_t>(i)])] = i;
        std::vector<std::int64_t> mask_slot(static_cast<std::size_t>(t), -1);
        std::vector<std::int64_t> masked_rows;
        for (std::int64_t i = 0; i < t; ++i) {
            if (!sc.visible[static_cast<std::size_t>(i)]) {
                mask_slot[static_cast<std::size_t>(i)] = 0;
                masked_rows.push_back(i);
            }
        }
        Tensor x = add(gather_rows(skip_proj, vis_slot), gather_rows(m.mask_token, mask_slot));
        Tensor anchors_t = Tensor::from_data({t, 3}, sc.coords);
        x = add(x, positional_encoding(anchors_t, m.dec_pos[static_cast<std::size_t>(s)]));
        if (s < scales - 1) {
            x = add(x, knn_maxpool(prev_anchors, prev_tokens, sc.coords,
                                   m.cfg.ks[static_cast<std::size_t>(s + 1)]));
        }

        for (const BlockParams& b : m.dec_stages[static_cast<std::size_t>(s)]) {
            x = prwkv_block(b, x, sc.coords, opt, /*lgm_enabled=*/false);
        }

        // each masked token reconstructs its patch as k_s relative offsets
        if (!masked_rows.empty()) {
            const int k = sc.k;
            Tensor pred = add_bias(matmul(gather_rows(x, masked_rows),
                                          m.recon_w[static_cast<std::size_t>(s)]),
                                   m.recon_b[static_cast<std::size_t>(s)]);
            out.predictions.push_back(pred);
            const auto& prev_sc = pyr.scales[static_cast<std::size_t>(std::max<std::int64_t>(s - 1, 0))];
            const std::vector<double>& base_coords = s == 0 ? sc.coords : prev_sc.coords;
            for (std::size_t mi = 0; mi < masked_rows.size(); ++mi) {
                const std::int64_t p = masked_rows[mi];
                std::vector<double> target(static_cast<std::size_t>(k) * 3);
                const double* center = sc.coords.data() + p * 3;
                for (int j = 0; j < k; ++j) {
                    const std::int64_t nj = sc.neighbors[static_cast<std::size_t>(p) * k + j];
                    for (int a = 0; a < 3; ++a)
                        target[static_cast<std::size_t>(j) * 3 + a] = base_coords[static_cast<std::size_t>(nj) * 3 + a] - center[a];
                }
                Tensor pred_i = reshape(gather_rows(pred, {static_cast<std::int64_t>(mi)}), {k, 3});
                chamfer_terms.push_back(
                    chamfer_loss(pred_i, Tensor::from_data({k, 3}, std::move(target))));
                ++out.masked_tokens;
            }
        }

        prev_tokens = x;
        prev_anchors = sc.coords;
    }

    if (chamfer_terms.empty()) {
        out.loss = Tensor::scalar(0.0);
        return out;
    }
    Tensor total = chamfer_terms[0];
    for (std::size_t i = 1; i < chamfer_terms.size(); ++i) total = add(total, chamfer_terms[i]);
    out.loss = mul_scalar(total, 1.0 / static_cast<double>(chamfer_terms.size()));
    return out;
}

Tensor pretrain_loss(const Model& m, const ScalePyramid& pyr) {
    EncoderOutput enc = encoder_forward(m, pyr);
    return decoder_forward(m, pyr, enc).loss;
}

Tensor classify_logits(const Model& m, const ScalePyramid& pyr) {
    EncoderOutput enc = encoder_forward(m, pyr);
    Tensor x = layernorm(enc.stages.back().tokens, m.final_ln_gamma, m.final_ln_beta);
    const int c = m.cfg.width;
    Tensor pooled = concat_last_axis({reshape(mean_rows(x), {1, c}), reshape(max_rows(x), {1, c})});
    Tensor h = silu(add_bias(matmul(pooled, m.head1_w), m.head1_b));
    Tensor logits = add_bias(matmul(h, m.head2_w), m.head2_b);
    return reshape(logits, {m.cfg.classes});
}

int argmax_class(const Tensor& logits) {
    const auto& d = logits.data();
    int best = 0;
    for (std::size_t i = 1; i < d.size(); ++i)
        if (d[i] > d[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    return best;
}

}  // namespace prwkv
