#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "prwkv/pointops.hpp"
#include "prwkv/rng.hpp"

using namespace prwkv;

namespace {

PointCloud random_cloud(std::int64_t n, std::uint64_t seed, double extent = 1.0) {
    Rng rng(seed);
    PointCloud pc;
    pc.coords.resize(static_cast<std::size_t>(n) * 3);
    for (double& v : pc.coords) v = rng.uniform(-extent, extent);
    return pc;
}

double sqdist(const double* a, const double* b) {
    const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

// independent greedy oracle: recompute the min distance over the selected
// set from scratch at every step
std::vector<std::int64_t> fps_oracle(const PointCloud& pc, std::int64_t m, std::int64_t seed_index) {
    std::vector<std::int64_t> sel{seed_index};
    while (static_cast<std::int64_t>(sel.size()) < m) {
        double best = -1.0;
        std::int64_t best_i = -1;
        for (std::int64_t i = 0; i < pc.size(); ++i) {
            double dmin = 1e300;
            for (std::int64_t s : sel) dmin = std::min(dmin, sqdist(pc.point(i), pc.point(s)));
            if (dmin > best) {
                best = dmin;
                best_i = i;
            }
        }
        sel.push_back(best_i);
    }
    return sel;
}

using EdgeSet = std::set<std::pair<std::int32_t, std::int32_t>>;

EdgeSet to_set(const RadiusGraph& g) { return EdgeSet(g.edges.begin(), g.edges.end()); }

}  // namespace

TEST_CASE("normalize centers and scales a two-point cloud") {
    PointCloud pc{{0, 0, 0, 2, 0, 0}};
    PointCloud n = normalize(pc);
    CHECK(n.coords[0] == doctest::Approx(-1.0));
    CHECK(n.coords[3] == doctest::Approx(1.0));
    CHECK(n.coords[1] == 0.0);
}

TEST_CASE("normalize is idempotent") {
    PointCloud pc = random_cloud(64, 5);
    PointCloud once = normalize(pc);
    PointCloud twice = normalize(once);
    for (std::size_t i = 0; i < once.coords.size(); ++i)
        CHECK(std::abs(once.coords[i] - twice.coords[i]) < 1e-12);
}

TEST_CASE("normalize recomputation: centroid at origin, max norm one") {
    PointCloud n = normalize(random_cloud(200, 6, 5.0));
    const double origin[3] = {0, 0, 0};
    double cx = 0, cy = 0, cz = 0, max_norm = 0;
    for (std::int64_t i = 0; i < n.size(); ++i) {
        cx += n.coords[i * 3];
        cy += n.coords[i * 3 + 1];
        cz += n.coords[i * 3 + 2];
        max_norm = std::max(max_norm, std::sqrt(sqdist(n.point(i), origin)));
    }
    CHECK(std::abs(cx / n.size()) < 1e-9);
    CHECK(std::abs(cy / n.size()) < 1e-9);
    CHECK(std::abs(cz / n.size()) < 1e-9);
    CHECK(max_norm == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("normalize degenerates identical points to zeros") {
    PointCloud pc{{2, 2, 2, 2, 2, 2, 2, 2, 2}};
    PointCloud n = normalize(pc);
    for (double v : n.coords) CHECK(v == 0.0);
}

TEST_CASE("fps picks the opposite unit-square corner") {
    PointCloud pc{{0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 0}};
    auto sel = fps(pc, 2, 0);
    CHECK(sel == std::vector<std::int64_t>{0, 3});
}

TEST_CASE("fps with m = N is a permutation") {
    PointCloud pc = random_cloud(40, 8);
    auto sel = fps(pc, 40, 0);
    std::vector<std::int64_t> sorted = sel;
    std::sort(sorted.begin(), sorted.end());
    for (std::int64_t i = 0; i < 40; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("fps equals the independent greedy oracle") {
    PointCloud pc = random_cloud(200, 9);
    CHECK(fps(pc, 50, 0) == fps_oracle(pc, 50, 0));
    CHECK(fps(pc, 25, 7) == fps_oracle(pc, 25, 7));
}

TEST_CASE("fps rejects m > N") {
    PointCloud pc = random_cloud(5, 10);
    CHECK_THROWS_AS(fps(pc, 6, 0), std::invalid_argument);
}

TEST_CASE("knn basic ordering") {
    PointCloud base{{0, 0, 0, 1, 0, 0, 5, 5, 5}};
    const double query[3] = {0, 0, 0};
    auto idx = knn(query, 1, base.coords.data(), 3, 2);
    CHECK(idx == std::vector<std::int64_t>{0, 1});
}

TEST_CASE("knn of a base point with k=1 returns itself") {
    PointCloud base = random_cloud(30, 11);
    auto idx = knn(base.coords.data() + 12, 1, base.coords.data(), 30, 1);
    CHECK(idx[0] == 4);
}

TEST_CASE("knn equals full-sort brute force on 500 random points") {
    PointCloud base = random_cloud(500, 12);
    PointCloud query = random_cloud(50, 13);
    const int k = 9;
    auto got = knn(query.coords.data(), 50, base.coords.data(), 500, k);
    for (std::int64_t q = 0; q < 50; ++q) {
        std::vector<std::pair<double, std::int64_t>> all;
        for (std::int64_t i = 0; i < 500; ++i)
            all.emplace_back(sqdist(query.point(q), base.point(i)), i);
        std::sort(all.begin(), all.end());
        for (int j = 0; j < k; ++j) CHECK(got[static_cast<std::size_t>(q * k + j)] == all[static_cast<std::size_t>(j)].second);
    }
}

TEST_CASE("knn rejects k > base size") {
    PointCloud base = random_cloud(4, 14);
    const double query[3] = {0, 0, 0};
    CHECK_THROWS_AS(knn(query, 1, base.coords.data(), 4, 5), std::invalid_argument);
}

TEST_CASE("radius graph on collinear points") {
    PointCloud pc{{0, 0, 0, 1, 0, 0, 2, 0, 0}};
    RadiusGraph g = radius_graph_celllist(pc, 1.5);
    EdgeSet expect{{0, 1}, {1, 0}, {1, 2}, {2, 1}};
    CHECK(to_set(g) == expect);
}

TEST_CASE("radius below min pairwise distance yields no edges") {
    PointCloud pc = random_cloud(20, 15, 10.0);
    double min_d = 1e300;
    for (std::int64_t i = 0; i < 20; ++i)
        for (std::int64_t j = i + 1; j < 20; ++j) min_d = std::min(min_d, std::sqrt(sqdist(pc.point(i), pc.point(j))));
    RadiusGraph g = radius_graph_celllist(pc, min_d * 0.5);
    CHECK(g.edges.empty());
}

TEST_CASE("cell list equals brute force on 1000 uniform points") {
    PointCloud pc = random_cloud(1000, 16);
    RadiusGraph fast = radius_graph_celllist(pc, 0.2);
    RadiusGraph slow = radius_graph_bruteforce(pc, 0.2);
    CHECK(fast.edges.size() == slow.edges.size());
    CHECK(to_set(fast) == to_set(slow));
}

TEST_CASE("radius graph symmetry and no self loops") {
    PointCloud pc = random_cloud(300, 17);
    RadiusGraph g = radius_graph_celllist(pc, 0.4);
    EdgeSet s = to_set(g);
    for (const auto& [i, j] : s) {
        CHECK(i != j);
        CHECK(s.count({j, i}) == 1);
    }
}

TEST_CASE("radius graph rejects bad radii") {
    PointCloud pc = random_cloud(5, 18);
    CHECK_THROWS_AS(radius_graph_celllist(pc, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(radius_graph_celllist(pc, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(radius_graph_celllist(pc, std::numeric_limits<double>::infinity()),
                    std::invalid_argument);
}

TEST_CASE("pyramid with reference sizes and list widths") {
    PointCloud pc = random_cloud(2048, 19);
    ScalePyramid pyr = build_pyramid(pc, {2048, 1024, 512}, {16, 8, 8});
    REQUIRE(pyr.num_scales() == 3);
    CHECK(pyr.scales[0].size == 2048);
    CHECK(pyr.scales[1].size == 1024);
    CHECK(pyr.scales[2].size == 512);
    CHECK(pyr.scales[0].neighbors.size() == 2048u * 16);
    CHECK(pyr.scales[1].neighbors.size() == 1024u * 8);
    CHECK(pyr.scales[2].neighbors.size() == 512u * 8);
}

TEST_CASE("single-scale pyramid is the identity") {
    PointCloud pc = random_cloud(32, 20);
    ScalePyramid pyr = build_pyramid(pc, {32}, {4});
    REQUIRE(pyr.num_scales() == 1);
    CHECK(pyr.scales[0].coords == pc.coords);
    for (std::int64_t i = 0; i < 32; ++i) CHECK(pyr.scales[0].parent_index[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("coarser coordinates appear verbatim one scale down") {
    PointCloud pc = random_cloud(256, 21);
    ScalePyramid pyr = build_pyramid(pc, {256, 64, 16}, {8, 8, 4});
    for (std::int64_t s = 1; s < pyr.num_scales(); ++s) {
        const auto& sc = pyr.scales[static_cast<std::size_t>(s)];
        const auto& prev = pyr.scales[static_cast<std::size_t>(s - 1)];
        for (std::int64_t i = 0; i < sc.size; ++i) {
            const std::int64_t p = sc.parent_index[static_cast<std::size_t>(i)];
            for (int a = 0; a < 3; ++a) CHECK(sc.coords[i * 3 + a] == prev.coords[p * 3 + a]);
        }
    }
}

TEST_CASE("pyramid size mismatch is rejected") {
    PointCloud pc = random_cloud(64, 22);
    CHECK_THROWS_AS(build_pyramid(pc, {64, 32}, {4}), std::invalid_argument);
    CHECK_THROWS_AS(build_pyramid(pc, {32, 16}, {4, 4}), std::invalid_argument);
    CHECK_THROWS_AS(build_pyramid(pc, {64, 64}, {4, 4}), std::invalid_argument);
}

TEST_CASE("mask keeps floor((1-ratio)*size) at the coarsest scale") {
    PointCloud pc = random_cloud(2048, 23);
    ScalePyramid pyr = build_pyramid(pc, {2048, 1024, 512}, {16, 8, 8});
    apply_multiscale_mask(pyr, 0.8, 77);
    CHECK(pyr.visible_count(2) == 102);  // floor(512 * 0.2)
}

TEST_CASE("mask ratio zero keeps everything visible") {
    PointCloud pc = random_cloud(128, 24);
    ScalePyramid pyr = build_pyramid(pc, {128, 64, 32}, {8, 4, 4});
    apply_multiscale_mask(pyr, 0.0, 5);
    for (std::int64_t s = 0; s < 3; ++s) CHECK(pyr.visible_count(s) == pyr.scales[static_cast<std::size_t>(s)].size);
}

TEST_CASE("mask rejects ratios outside [0,1)") {
    PointCloud pc = random_cloud(16, 25);
    ScalePyramid pyr = build_pyramid(pc, {16, 8}, {4, 4});
    CHECK_THROWS_AS(apply_multiscale_mask(pyr, 1.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(apply_multiscale_mask(pyr, -0.1, 1), std::invalid_argument);
}

TEST_CASE("visibility consistency holds over 50 random pyramids") {
    for (std::uint64_t trial = 0; trial < 50; ++trial) {
        PointCloud pc = random_cloud(128, 1000 + trial);
        ScalePyramid pyr = build_pyramid(pc, {128, 64, 32}, {8, 4, 4});
        apply_multiscale_mask(pyr, 0.75, trial);
        // every visible fine point appears in the grouping list of at least
        // one visible point a scale up
        for (std::int64_t s = 0; s + 1 < pyr.num_scales(); ++s) {
            const auto& fine = pyr.scales[static_cast<std::size_t>(s)];
            const auto& up = pyr.scales[static_cast<std::size_t>(s + 1)];
            for (std::int64_t i = 0; i < fine.size; ++i) {
                if (!fine.visible[static_cast<std::size_t>(i)]) continue;
                bool covered = false;
                for (std::int64_t j = 0; j < up.size && !covered; ++j) {
                    if (!up.visible[static_cast<std::size_t>(j)]) continue;
                    for (int n = 0; n < up.k; ++n) {
                        if (up.neighbors[static_cast<std::size_t>(j) * up.k + n] == i) {
                            covered = true;
                            break;
                        }
                    }
                }
                CHECK(covered);
            }
            CHECK(pyr.visible_count(s) >= 1);
        }
    }
}

TEST_CASE("pyramid and mask are deterministic per seed") {
    PointCloud pc = random_cloud(200, 26);
    ScalePyramid a = build_pyramid(pc, {200, 80, 20}, {8, 8, 4}, 3);
    ScalePyramid b = build_pyramid(pc, {200, 80, 20}, {8, 8, 4}, 3);
    apply_multiscale_mask(a, 0.6, 9);
    apply_multiscale_mask(b, 0.6, 9);
    for (std::int64_t s = 0; s < 3; ++s) {
        CHECK(a.scales[static_cast<std::size_t>(s)].parent_index == b.scales[static_cast<std::size_t>(s)].parent_index);
        CHECK(a.scales[static_cast<std::size_t>(s)].visible == b.scales[static_cast<std::size_t>(s)].visible);
    }
}

TEST_CASE("fps anti-clustering beats random subsets in at least 95% of trials") {
    int wins = 0;
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
        PointCloud pc = random_cloud(100, 3000 + static_cast<std::uint64_t>(t));
        auto min_pairwise = [&](const std::vector<std::int64_t>& idx) {
            double best = 1e300;
            for (std::size_t i = 0; i < idx.size(); ++i)
                for (std::size_t j = i + 1; j < idx.size(); ++j)
                    best = std::min(best, sqdist(pc.point(idx[i]), pc.point(idx[j])));
            return best;
        };
        auto sel = fps(pc, 20, 0);
        Rng rng(9000 + static_cast<std::uint64_t>(t));
        std::vector<std::int64_t> rand_idx;
        std::set<std::int64_t> used;
        while (rand_idx.size() < 20) {
            const auto i = static_cast<std::int64_t>(rng.uniform_index(100));
            if (used.insert(i).second) rand_idx.push_back(i);
        }
        if (min_pairwise(sel) >= min_pairwise(rand_idx)) ++wins;
    }
    CHECK(wins >= 190);
}

TEST_CASE("canonical order is permutation-invariant") {
    PointCloud pc = random_cloud(50, 27);
    PointCloud shuffled = pc;
    Rng rng(28);
    for (std::int64_t i = 49; i > 0; --i) {
        const auto j = static_cast<std::int64_t>(rng.uniform_index(static_cast<std::uint64_t>(i + 1)));
        for (int a = 0; a < 3; ++a) std::swap(shuffled.coords[i * 3 + a], shuffled.coords[j * 3 + a]);
    }
    canonical_order(pc);
    canonical_order(shuffled);
    CHECK(pc.coords == shuffled.coords);
}

TEST_CASE("text and binary cloud files round-trip") {
    namespace fs = std::filesystem;
    PointCloud pc = random_cloud(17, 29);
    const std::string tpath = (fs::temp_directory_path() / "prwkv_pts.txt").string();
    const std::string bpath = (fs::temp_directory_path() / "prwkv_pts.pcb").string();
    save_cloud_text(pc, tpath);
    PointCloud t = load_cloud(tpath);
    REQUIRE(t.size() == pc.size());
    for (std::size_t i = 0; i < pc.coords.size(); ++i) CHECK(t.coords[i] == doctest::Approx(pc.coords[i]).epsilon(1e-12));

    save_cloud_binary(pc, bpath);
    PointCloud b = load_cloud(bpath);
    REQUIRE(b.size() == pc.size());
    for (std::size_t i = 0; i < pc.coords.size(); ++i)
        CHECK(b.coords[i] == static_cast<double>(static_cast<float>(pc.coords[i])));
    fs::remove(tpath);
    fs::remove(bpath);
}

TEST_CASE("override_masked_coords leaves structure untouched") {
    PointCloud pc = random_cloud(64, 30);
    ScalePyramid pyr = build_pyramid(pc, {64, 32, 16}, {8, 4, 4});
    apply_multiscale_mask(pyr, 0.8, 4);
    ScalePyramid z = override_masked_coords(pyr, 0);
    ScalePyramid r = override_masked_coords(pyr, 99);
    for (std::int64_t s = 0; s < 3; ++s) {
        const auto& orig = pyr.scales[static_cast<std::size_t>(s)];
        CHECK(z.scales[static_cast<std::size_t>(s)].neighbors == orig.neighbors);
        CHECK(r.scales[static_cast<std::size_t>(s)].visible == orig.visible);
        for (std::int64_t i = 0; i < orig.size; ++i) {
            if (orig.visible[static_cast<std::size_t>(i)]) {
                for (int a = 0; a < 3; ++a) {
                    CHECK(z.scales[static_cast<std::size_t>(s)].coords[i * 3 + a] == orig.coords[i * 3 + a]);
                    CHECK(r.scales[static_cast<std::size_t>(s)].coords[i * 3 + a] == orig.coords[i * 3 + a]);
                }
            } else {
                for (int a = 0; a < 3; ++a) CHECK(z.scales[static_cast<std::size_t>(s)].coords[i * 3 + a] == 0.0);
            }
        }
    }
}
