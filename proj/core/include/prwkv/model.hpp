#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prwkv/checkpoint.hpp"
#include "prwkv/embed.hpp"
#include "prwkv/lgm.hpp"
#include "prwkv/mixing.hpp"
#include "prwkv/pointops.hpp"
#include "prwkv/tensor.hpp"

namespace prwkv {

struct ModelConfig {
    std::vector<std::int64_t> scale_sizes{2048, 1024, 512};
    std::vector<int> ks{16, 8, 8};
    int width = 64;
    int heads = 4;
    int pe_hidden = 128;
    int d_lora = 0;  // 0 -> max(width/8, 8)
    int hidden_ratio = 4;
    std::vector<int> blocks_per_stage{4, 4, 4};
    // indexed by scale; the coarsest scale decodes first
    std::vector<int> decoder_blocks_per_stage{1, 1, 2};
    double mask_ratio = 0.8;
    std::vector<double> lgm_radius{0.3, 0.3, 0.3};
    int lgm_iterations = 3;
    bool lgm_tied = true;
    bool lgm_mean_aggregate = false;
    bool use_lgm = true;
    bool use_stabilizer = true;
    bool use_bqe = true;
    bool bqe_lerp = false;
    bool bqe_grid2d = true;
    bool bidirectional = true;
    int classes = 4;

    std::int64_t num_scales() const { return static_cast<std::int64_t>(scale_sizes.size()); }
    int encoder_depth() const;
    int decoder_depth() const;
    int lora_dim() const { return d_lora > 0 ? d_lora : std::max(width / 8, 8); }
    MixOptions mix_options() const;
    void validate() const;
};

struct BlockParams {
    SpatialMixParams spatial;
    ChannelMixParams channel;
    LgmParams lgm;
    bool has_lgm = false;
    Tensor fuse_w, fuse_b;  // 2C -> C, encoder blocks only

    static BlockParams init(ParamStore& store, const std::string& prefix, const ModelConfig& cfg,
                            double lgm_radius, bool with_lgm, Rng& rng);
};

struct Model {
    ModelConfig cfg;
    ParamStore store;
    std::vector<ScaleEmbedParams> embeds;              // per scale
    std::vector<std::vector<BlockParams>> enc_stages;  // per scale
    Tensor mask_token;                                 // [1 x C]
    std::vector<PosEncParams> dec_pos;                 // per scale
    std::vector<Tensor> skip_w, skip_b;                // per scale, C -> C
    std::vector<std::vector<BlockParams>> dec_stages;  // per scale, IFM only
    std::vector<Tensor> recon_w, recon_b;              // per scale, C -> k_s*3
    Tensor final_ln_gamma, final_ln_beta;
    Tensor head1_w, head1_b, head2_w, head2_b;
};

Model build_model(const ModelConfig& cfg, std::uint64_t seed);

// IFM residual chain; when the block carries an LGM branch the two paths are
// fused by the 2C -> C projection.
Tensor prwkv_block(const BlockParams& p, const Tensor& x, const std::vector<double>& anchors,
                   const MixOptions& opt, bool lgm_enabled);

// normalize + canonical ordering + pyramid (+ optional multi-scale mask)
ScalePyramid prepare_pyramid(const ModelConfig& cfg, const PointCloud& pc, bool masked,
                             std::uint64_t mask_seed);

struct EncoderOutput {
    std::vector<TokenSequence> stages;  // per scale, tokens after that stage's blocks
};

// Runs stages fine to coarse over visible tokens only; between stages the
// finer tokens are k-NN max-pooled onto the coarser centers and added to the
// coarser scale's fresh embedding.
EncoderOutput encoder_forward(const Model& m, const ScalePyramid& pyr);

struct DecoderOutput {
    Tensor loss;                      // mean patch chamfer over all masked tokens
    std::int64_t masked_tokens = 0;   // prediction count
    std::vector<Tensor> predictions;  // per scale, [masked_s x k_s*3]
};

// Coarse-to-fine pass over the full token set of each scale; masked slots
// carry the learned mask token plus center positional encoding, visible
// slots carry projected encoder skips.
DecoderOutput decoder_forward(const Model& m, const ScalePyramid& pyr, const EncoderOutput& enc);

Tensor pretrain_loss(const Model& m, const ScalePyramid& pyr);

// Encoder at mask ratio 0, mean+max pooled final tokens, two-layer head.
Tensor classify_logits(const Model& m, const ScalePyramid& pyr);

int argmax_class(const Tensor& logits);

}  // namespace prwkv
