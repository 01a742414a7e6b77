#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prwkv/checkpoint.hpp"
#include "prwkv/pointops.hpp"
#include "prwkv/rng.hpp"
#include "prwkv/tensor.hpp"

namespace prwkv {

struct TokenSequence {
    Tensor tokens;                          // T x C
    std::vector<double> anchors;            // T x 3, copies of the pyramid coords
    std::vector<std::int64_t> point_index;  // T, position within the pyramid scale
    int scale_id = 0;

    std::int64_t count() const { return static_cast<std::int64_t>(point_index.size()); }
};

// Shared per-point layers 3 -> C/2 -> C with SiLU, coordinatewise max over
// the patch, then an output map C -> C.
struct MiniPointNetParams {
    Tensor w1, b1, w2, b2, w3, b3;

    static MiniPointNetParams init(ParamStore& store, const std::string& prefix, int c, Rng& rng);
};

// Two-layer perceptron from R^3 to R^C.
struct PosEncParams {
    Tensor w1, b1, w2, b2;

    static PosEncParams init(ParamStore& store, const std::string& prefix, int hidden, int c, Rng& rng);
};

struct ScaleEmbedParams {
    MiniPointNetParams pointnet;
    PosEncParams pos;

    static ScaleEmbedParams init(ParamStore& store, const std::string& prefix, int c, int pe_hidden,
                                 Rng& rng);
};

// patch holds neighbor-minus-center offsets. Returns a [C] vector.
Tensor mini_pointnet(const Tensor& patch, const MiniPointNetParams& p);

// Batched form: points [sum_k x 3] with a segment id per row; returns [T x C].
Tensor mini_pointnet_batch(const Tensor& points, const std::vector<std::int64_t>& seg,
                           std::int64_t t, const MiniPointNetParams& p);

Tensor positional_encoding(const Tensor& anchors, const PosEncParams& p);  // [T x 3] -> [T x C]

// One token per visible point of the scale: pooled patch feature plus the
// positional encoding of the patch center. At the finest scale patches are
// regrouped among visible points so masked coordinates are never read.
TokenSequence embed_scale(const ScalePyramid& pyr, std::int64_t scale, const ScaleEmbedParams& p);

}  // namespace prwkv
