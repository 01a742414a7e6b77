#include "prwkv/gradcheck.hpp"

#include <cmath>

#include "prwkv/config.hpp"
#include "prwkv/dataset.hpp"
#include "prwkv/embed.hpp"
#include "prwkv/lgm.hpp"
#include "prwkv/mixing.hpp"
#include "prwkv/model.hpp"
#include "prwkv/rng.hpp"
#include "prwkv/tensor.hpp"

namespace prwkv {

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (double& x : v) x = rng.uniform(lo, hi);
    return Tensor::from_data(std::move(shape), std::move(v));
}

struct Suite {
    std::vector<GradCheckResult> results;

    void check(const std::string& name, double err, double tol) {
        results.push_back({name, err, tol, err <= tol});
    }
};

}  // namespace

std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed) {
    Suite suite;
    Rng rng(derive_seed(seed, 0x67726164ULL));
    const double op_tol = 1e-6;
    const double composite_tol = 1e-4;

    // matmul, both operands
    {
        Tensor a = random_tensor({3, 4}, rng);
        Tensor b = random_tensor({4, 2}, rng);
        suite.check("matmul/lhs",
                    fd_check([&](const Tensor& x) { return sum_all(matmul(x, b)); }, a), op_tol);
        suite.check("matmul/rhs",
                    fd_check([&](const Tensor& x) { return sum_all(matmul(a, x)); }, b), op_tol);
    }

    // layernorm wrt input and affine params
    {
        Tensor x = random_tensor({3, 6}, rng);
        Tensor g = random_tensor({6}, rng, 0.5, 1.5);
        Tensor b = random_tensor({6}, rng);
        suite.check("layernorm/x",
                    fd_check([&](const Tensor& t) { return sum_all(mul(layernorm(t, g, b), t)); }, x),
                    op_tol);
        suite.check("layernorm/gamma",
                    fd_check([&](const Tensor& t) { return sum_all(mul(layernorm(x, t, b), x)); }, g),
                    op_tol);
        suite.check("layernorm/beta",
                    fd_check([&](const Tensor& t) { return sum_all(mul(layernorm(x, g, t), x)); }, b),
                    op_tol);
        Tensor gc = random_tensor({6}, rng, 0.5, 1.5);
        suite.check("head_layernorm/x",
                    fd_check([&](const Tensor& t) { return sum_all(mul(head_layernorm(t, 2, gc, b), t)); }, x),
                    op_tol);
    }

    // activations on 100 random scalars each, away from kinks
    {
        auto act_check = [&](const char* name, Tensor (*fn)(const Tensor&)) {
            Tensor x = random_tensor({100}, rng, -2.0, 2.0);
            for (double& v : x.mutable_data()) {
                if (std::abs(v) < 1e-2) v += 0.05;  // keep squared_relu off its corner
            }
            Tensor w = random_tensor({100}, rng);
            suite.check(name, fd_check([&](const Tensor& t) { return sum_all(mul(fn(t), w)); }, x),
                        op_tol);
        };
        act_check("silu", silu);
        act_check("sigmoid", sigmoid);
        act_check("tanh", tanh_op);
        act_check("exp", exp_op);
        act_check("squared_relu", squared_relu);
    }

    // concat / slice routing
    {
        Tensor a = random_tensor({3, 2}, rng);
        Tensor b = random_tensor({3, 2}, rng);
        Tensor w = random_tensor({3, 4}, rng);
        suite.check("concat_last_axis",
                    fd_check([&](const Tensor& t) { return sum_all(mul(concat_last_axis({t, b}), w)); }, a),
                    op_tol);
        Tensor x = random_tensor({3, 6}, rng);
        Tensor w2 = random_tensor({3, 2}, rng);
        suite.check("slice_last_axis",
                    fd_check([&](const Tensor& t) { return sum_all(mul(slice_last_axis(t, 2, 4), w2)); }, x),
                    op_tol);
    }

    // structural ops
    {
        Tensor x = random_tensor({4, 3}, rng);
        Tensor b = random_tensor({3}, rng);
        Tensor w = random_tensor({4, 3}, rng);
        suite.check("add_bias/x",
                    fd_check([&](const Tensor& t) { return sum_all(mul(add_bias(t, b), w)); }, x), op_tol);
        suite.check("add_bias/b",
                    fd_check([&](const Tensor& t) { return sum_all(mul(add_bias(x, t), w)); }, b), op_tol);
        suite.check("scale_cols/x",
                    fd_check([&](const Tensor& t) { return sum_all(mul(scale_cols(t, b), w)); }, x), op_tol);
        suite.check("scale_cols/v",
                    fd_check([&](const Tensor& t) { return sum_all(mul(scale_cols(x, t), w)); }, b), op_tol);
        std::vector<std::int64_t> idx{2, 0, -1, 3, 0};
        Tensor wg = random_tensor({5, 3}, rng);
        suite.check("gather_rows",
                    fd_check([&](const Tensor& t) { return sum_all(mul(gather_rows(t, idx), wg)); }, x),
                    op_tol);
        std::vector<std::int64_t> seg{0, 0, 2, 2};
        Tensor ws = random_tensor({3, 3}, rng);
        suite.check("segment_max",
                    fd_check([&](const Tensor& t) { return sum_all(mul(segment_max(t, seg, 3), ws)); }, x),
                    op_tol);
        suite.check("segment_mean",
                    fd_check([&](const Tensor& t) { return sum_all(mul(segment_mean(t, seg, 3), ws)); }, x),
                    op_tol);
        Tensor wr = random_tensor({3}, rng);
        suite.check("mean_rows",
                    fd_check([&](const Tensor& t) { return sum_all(mul(mean_rows(t), wr)); }, x), op_tol);
        suite.check("max_rows",
                    fd_check([&](const Tensor& t) { return sum_all(mul(max_rows(t), wr)); }, x), op_tol);
        suite.check("reshape",
                    fd_check([&](const Tensor& t) { return sum_all(mul(reshape(t, {12}), reshape(w, {12}))); }, x),
                    op_tol);
        Tensor logits = random_tensor({5}, rng);
        suite.check("softmax_cross_entropy",
                    fd_check([&](const Tensor& t) { return softmax_cross_entropy(t, 2); }, logits),
                    op_tol);
        Tensor pred = random_tensor({4, 3}, rng);
        Tensor target = random_tensor({4, 3}, rng);
        suite.check("chamfer_loss",
                    fd_check([&](const Tensor& t) { return chamfer_loss(t, target); }, pred), op_tol);
    }

    // bqe and the decay pipeline
    {
        Tensor x = random_tensor({9, 8}, rng);
        Tensor mu = random_tensor({8}, rng, 0.2, 0.8);
        Tensor w = random_tensor({9, 8}, rng);
        suite.check("bqe/x",
                    fd_check([&](const Tensor& t) { return sum_all(mul(bqe(t, mu), w)); }, x), op_tol);
        suite.check("bqe/mu",
                    fd_check([&](const Tensor& t) { return sum_all(mul(bqe(x, t), w)); }, mu), op_tol);
    }

    // biwkv against finite differences on every operand
    {
        const std::int64_t t_len = 5;
        const int heads = 2, c = 8;
        Tensor r = random_tensor({t_len, c}, rng);
        Tensor k = random_tensor({t_len, c}, rng);
        Tensor v = random_tensor({t_len, c}, rng);
        Tensor w = random_tensor({t_len, c}, rng, 0.2, 0.9);
        Tensor u = random_tensor({c}, rng, 0.1, 0.9);
        Tensor mask = random_tensor({t_len, c}, rng);
        auto wrap = [&](const Tensor& rr, const Tensor& kk, const Tensor& vv, const Tensor& ww,
                        const Tensor& uu) { return sum_all(mul(biwkv(rr, kk, vv, ww, uu, heads), mask)); };
        suite.check("biwkv/r", fd_check([&](const Tensor& t) { return wrap(t, k, v, w, u); }, r), op_tol);
        suite.check("biwkv/k", fd_check([&](const Tensor& t) { return wrap(r, t, v, w, u); }, k), op_tol);
        suite.check("biwkv/v", fd_check([&](const Tensor& t) { return wrap(r, k, t, w, u); }, v), op_tol);
        suite.check("biwkv/w", fd_check([&](const Tensor& t) { return wrap(r, k, v, t, u); }, w), op_tol);
        suite.check("biwkv/u", fd_check([&](const Tensor& t) { return wrap(r, k, v, w, t); }, u), op_tol);
    }

    // spatial mixing, all parameters
    {
        ParamStore store;
        Rng prng(derive_seed(seed, 2));
        SpatialMixParams p = SpatialMixParams::init(store, "sm", 8, 2, 8, prng);
        Tensor x = random_tensor({5, 8}, rng);
        Tensor mask = random_tensor({5, 8}, rng);
        auto loss = [&]() { return sum_all(mul(spatial_mixing(x, p), mask)); };
        FdReport rep = fd_check_params(loss, store.entries());
        suite.check("spatial_mixing[" + rep.worst_param + "]", rep.max_err, composite_tol);
    }

    // channel mixing, all parameters
    {
        ParamStore store;
        Rng prng(derive_seed(seed, 3));
        ChannelMixParams p = ChannelMixParams::init(store, "cm", 8, 4, prng);
        Tensor x = random_tensor({4, 8}, rng);
        Tensor mask = random_tensor({4, 8}, rng);
        auto loss = [&]() { return sum_all(mul(channel_mixing(x, p), mask)); };
        FdReport rep = fd_check_params(loss, store.entries());
        suite.check("channel_mixing[" + rep.worst_param + "]", rep.max_err, composite_tol);
    }

    // lgm on a six-vertex graph
    {
        ParamStore store;
        Rng prng(derive_seed(seed, 4));
        LgmParams p = LgmParams::init(store, "lgm", 6, 2, 0.8, /*tied=*/true, prng);
        std::vector<double> anchors(18);
        for (double& a : anchors) a = rng.uniform(-0.5, 0.5);
        Tensor feats = random_tensor({6, 6}, rng);
        Tensor mask = random_tensor({6, 6}, rng);
        auto loss = [&]() { return sum_all(mul(lgm_forward(anchors, feats, p), mask)); };
        FdReport rep = fd_check_params(loss, store.entries());
        suite.check("lgm[" + rep.worst_param + "]", rep.max_err, composite_tol);
    }

    // embedding nets
    {
        ParamStore store;
        Rng prng(derive_seed(seed, 5));
        ScaleEmbedParams p = ScaleEmbedParams::init(store, "embed", 8, 8, prng);
        Tensor pts = random_tensor({12, 3}, rng);
        std::vector<std::int64_t> seg{0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2};
        Tensor anchors = random_tensor({3, 3}, rng);
        Tensor mask = random_tensor({3, 8}, rng);
        auto loss = [&]() {
            Tensor tok = add(mini_pointnet_batch(pts, seg, 3, p.pointnet),
                             positional_encoding(anchors, p.pos));
            return sum_all(mul(tok, mask));
        };
        FdReport rep = fd_check_params(loss, store.entries());
        suite.check("embed[" + rep.worst_param + "]", rep.max_err, composite_tol);
    }

    // the full tiny model through the pretraining loss
    {
        ModelConfig cfg;
        cfg.scale_sizes = {64, 32, 16};
        cfg.ks = {8, 4, 4};
        cfg.width = 8;
        cfg.heads = 2;
        cfg.pe_hidden = 8;
        cfg.hidden_ratio = 2;
        cfg.blocks_per_stage = {1, 1, 1};
        cfg.decoder_blocks_per_stage = {1, 1, 1};
        cfg.lgm_radius = {0.5, 0.6, 0.8};
        cfg.lgm_iterations = 2;
        cfg.mask_ratio = 0.8;
        Model model = build_model(cfg, derive_seed(seed, 6));
        PointCloud pc = gen_shape(ShapeKind::Torus, 64, derive_seed(seed, 7), 0.02);
        ScalePyramid pyr = prepare_pyramid(cfg, pc, /*masked=*/true, derive_seed(seed, 8));
        auto loss = [&]() { return pretrain_loss(model, pyr); };
        FdReport rep = fd_check_params(loss, model.store.entries());
        suite.check("tiny_model[" + rep.worst_param + "]", rep.max_err, composite_tol);
    }

    return suite.results;
}

}  // namespace prwkv
