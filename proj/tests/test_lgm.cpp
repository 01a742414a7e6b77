#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "prwkv/lgm.hpp"
#include "prwkv/rng.hpp"

using namespace prwkv;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (double& x : v) x = rng.uniform(lo, hi);
    return Tensor::from_data(std::move(shape), std::move(v));
}

std::vector<double> random_anchors(std::int64_t n, std::uint64_t seed, double extent = 0.6) {
    Rng rng(seed);
    std::vector<double> a(static_cast<std::size_t>(n) * 3);
    for (double& v : a) v = rng.uniform(-extent, extent);
    return a;
}

LgmParams make_params(ParamStore& store, int c, int iterations, double radius, std::uint64_t seed,
                      bool tied = true) {
    Rng rng(seed);
    return LgmParams::init(store, "lgm", c, iterations, radius, tied, rng);
}

}  // namespace

TEST_CASE("zero iterations return the input features exactly") {
    ParamStore store;
    LgmParams p = make_params(store, 6, 0, 0.5, 1);
    Rng rng(2);
    auto anchors = random_anchors(10, 3);
    Tensor feats = random_tensor({10, 6}, rng);
    Tensor out = lgm_forward(anchors, feats, p);
    CHECK(out.data() == feats.data());
}

TEST_CASE("zero stabilizer weights reduce to the plain relative-coordinate update") {
    ParamStore store;
    LgmParams p = make_params(store, 6, 3, 0.5, 4);
    std::fill(p.iters[0].h_w.mutable_data().begin(), p.iters[0].h_w.mutable_data().end(), 0.0);
    std::fill(p.iters[0].h_b.mutable_data().begin(), p.iters[0].h_b.mutable_data().end(), 0.0);
    Rng rng(5);
    auto anchors = random_anchors(12, 6);
    Tensor feats = random_tensor({12, 6}, rng);
    Tensor with_h = lgm_forward(anchors, feats, p);
    LgmParams no_stab = p;
    no_stab.stabilizer = false;
    Tensor without = lgm_forward(anchors, feats, no_stab);
    CHECK(with_h.data() == without.data());  // bit-equal
}

TEST_CASE("default iteration count is three") {
    LgmParams p;
    CHECK(p.iterations == 3);
}

TEST_CASE("translation invariance, including a zero shift") {
    ParamStore store;
    LgmParams p = make_params(store, 8, 3, 0.5, 7);
    Rng rng(8);
    auto anchors = random_anchors(20, 9);
    Tensor feats = random_tensor({20, 8}, rng);
    CHECK(lgm_translation_check(anchors, feats, {0, 0, 0}, p));
    CHECK(lgm_translation_check(anchors, feats, {10.0, -3.0, 0.5}, p));
    CHECK(lgm_translation_check(anchors, feats, {-250.0, 4.25, 17.0}, p));
}

TEST_CASE("rotation is generally not an invariance") {
    ParamStore store;
    LgmParams p = make_params(store, 8, 2, 0.7, 10);
    Rng rng(11);
    auto anchors = random_anchors(16, 12);
    Tensor feats = random_tensor({16, 8}, rng);
    NoGradGuard ng;
    Tensor base = lgm_forward(anchors, feats, p);
    // rotate 90 degrees about z
    std::vector<double> rotated(anchors.size());
    for (std::size_t i = 0; i < anchors.size() / 3; ++i) {
        rotated[i * 3] = -anchors[i * 3 + 1];
        rotated[i * 3 + 1] = anchors[i * 3];
        rotated[i * 3 + 2] = anchors[i * 3 + 2];
    }
    Tensor turned = lgm_forward(rotated, feats, p);
    double max_delta = 0.0;
    for (std::size_t i = 0; i < base.data().size(); ++i)
        max_delta = std::max(max_delta, std::abs(base.data()[i] - turned.data()[i]));
    CHECK(max_delta > 1e-6);
}

TEST_CASE("permutation equivariance") {
    ParamStore store;
    LgmParams p = make_params(store, 6, 3, 0.6, 13);
    Rng rng(14);
    const std::int64_t n = 14;
    auto anchors = random_anchors(n, 15);
    Tensor feats = random_tensor({n, 6}, rng);
    NoGradGuard ng;
    Tensor base = lgm_forward(anchors, feats, p);

    // apply a fixed permutation to vertices and features
    std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = (i * 5 + 3) % n;
    std::vector<double> anchors_p(anchors.size());
    std::vector<double> feats_p(feats.data().size());
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t src = perm[static_cast<std::size_t>(i)];
        for (int a = 0; a < 3; ++a) anchors_p[i * 3 + a] = anchors[static_cast<std::size_t>(src * 3 + a)];
        for (int ch = 0; ch < 6; ++ch) feats_p[static_cast<std::size_t>(i * 6 + ch)] = feats.data()[static_cast<std::size_t>(src * 6 + ch)];
    }
    Tensor out_p = lgm_forward(anchors_p, Tensor::from_data({n, 6}, std::move(feats_p)), p);
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t src = perm[static_cast<std::size_t>(i)];
        for (int ch = 0; ch < 6; ++ch)
            CHECK(out_p.data()[static_cast<std::size_t>(i * 6 + ch)] ==
                  base.data()[static_cast<std::size_t>(src * 6 + ch)]);
    }
}

TEST_CASE("duplicating an edge leaves max aggregation unchanged") {
    ParamStore store;
    LgmParams p = make_params(store, 6, 2, 0.6, 16);
    Rng rng(17);
    auto anchors = random_anchors(8, 18);
    Tensor feats = random_tensor({8, 6}, rng);
    RadiusGraph g = radius_graph_celllist(anchors.data(), 8, 0.6);
    REQUIRE(!g.edges.empty());
    NoGradGuard ng;
    Tensor base = lgm_forward_graph(anchors, g, feats, p);
    RadiusGraph doubled = g;
    doubled.edges.push_back(g.edges.front());
    std::sort(doubled.edges.begin(), doubled.edges.end());
    Tensor with_dup = lgm_forward_graph(anchors, doubled, feats, p);
    CHECK(base.data() == with_dup.data());
}

TEST_CASE("isolated vertices aggregate zeros but still update") {
    ParamStore store;
    LgmParams p = make_params(store, 4, 1, 0.1, 19);
    // two clusters far apart, radius too small for any edge
    std::vector<double> anchors{0, 0, 0, 5, 5, 5, -5, -5, -5};
    Rng rng(20);
    Tensor feats = random_tensor({3, 4}, rng);
    Tensor out = lgm_forward(anchors, feats, p);
    CHECK(out.shape() == Shape{3, 4});
    for (double v : out.data()) CHECK(std::isfinite(v));
    // with the zero aggregate, the update depends only on the vertex feature
    // itself; two vertices with equal features must update identically
    std::vector<double> same{0.1, 0.2, 0.3, 0.4, 0.1, 0.2, 0.3, 0.4, 9, 9, 9, 9};
    Tensor feats2 = Tensor::from_data({3, 4}, std::move(same));
    Tensor out2 = lgm_forward(anchors, feats2, p);
    for (int ch = 0; ch < 4; ++ch)
        CHECK(out2.data()[static_cast<std::size_t>(ch)] == out2.data()[static_cast<std::size_t>(4 + ch)]);
}

TEST_CASE("mean aggregation flag changes the set function") {
    ParamStore store;
    LgmParams p = make_params(store, 4, 1, 0.8, 21);
    Rng rng(22);
    auto anchors = random_anchors(9, 23);
    Tensor feats = random_tensor({9, 4}, rng);
    NoGradGuard ng;
    Tensor mx = lgm_forward(anchors, feats, p);
    LgmParams pm = p;
    pm.mean_aggregate = true;
    Tensor mn = lgm_forward(anchors, feats, pm);
    bool differs = false;
    for (std::size_t i = 0; i < mx.data().size(); ++i) differs = differs || mx.data()[i] != mn.data()[i];
    CHECK(differs);
}

TEST_CASE("untied iterations hold distinct parameters") {
    ParamStore store;
    LgmParams p = make_params(store, 4, 3, 0.5, 24, /*tied=*/false);
    CHECK(p.iters.size() == 3);
    CHECK(p.iters[0].f_w.data() != p.iters[1].f_w.data());
}

TEST_CASE("parameter gradients on a six-vertex graph") {
    ParamStore store;
    LgmParams p = make_params(store, 6, 2, 0.8, 25);
    Rng rng(26);
    auto anchors = random_anchors(6, 27, 0.4);
    Tensor feats = random_tensor({6, 6}, rng);
    Tensor mask = random_tensor({6, 6}, rng);
    FdReport rep = fd_check_params(
        [&]() { return sum_all(mul(lgm_forward(anchors, feats, p), mask)); }, store.entries());
    INFO("worst parameter: ", rep.worst_param);
    CHECK(rep.max_err <= 1e-4);
}
