#include "prwkv/pointops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "prwkv/rng.hpp"

namespace prwkv {

namespace {

double sqdist(const double* a, const double* b) {
    const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

void check_finite(const PointCloud& pc, const char* who) {
    for (double v : pc.coords) {
        if (!std::isfinite(v)) throw std::invalid_argument(std::string(who) + ": non-finite coordinate");
    }
}

}  // namespace

PointCloud normalize(const PointCloud& pc) {
    const std::int64_t n = pc.size();
    if (n < 1) throw std::invalid_argument("normalize: empty point cloud");
    check_finite(pc, "normalize");
    double cx = 0, cy = 0, cz = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        cx += pc.coords[i * 3];
        cy += pc.coords[i * 3 + 1];
        cz += pc.coords[i * 3 + 2];
    }
    cx /= static_cast<double>(n);
    cy /= static_cast<double>(n);
    cz /= static_cast<double>(n);
    PointCloud out;
    out.coords.resize(pc.coords.size());
    double max_sq = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double x = pc.coords[i * 3] - cx;
        const double y = pc.coords[i * 3 + 1] - cy;
        const double z = pc.coords[i * 3 + 2] - cz;
        out.coords[i * 3] = x;
        out.coords[i * 3 + 1] = y;
        out.coords[i * 3 + 2] = z;
        max_sq = std::max(max_sq, x * x + y * y + z * z);
    }
    if (max_sq == 0.0) return out;  // all points identical -> all-zero cloud
    const double inv = 1.0 / std::sqrt(max_sq);
    for (double& v : out.coords) v *= inv;
    return out;
}

std::vector<std::int64_t> canonical_order(PointCloud& pc) {
    const std::int64_t n = pc.size();
    std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    const double* c = pc.coords.data();
    std::sort(perm.begin(), perm.end(), [c](std::int64_t a, std::int64_t b) {
        const double* pa = c + a * 3;
        const double* pb = c + b * 3;
        if (pa[0] != pb[0]) return pa[0] < pb[0];
        if (pa[1] != pb[1]) return pa[1] < pb[1];
        return pa[2] < pb[2];
    });
    std::vector<double> sorted(pc.coords.size());
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t src = perm[static_cast<std::size_t>(i)];
        sorted[i * 3] = c[src * 3];
        sorted[i * 3 + 1] = c[src * 3 + 1];
        sorted[i * 3 + 2] = c[src * 3 + 2];
    }
    pc.coords = std::move(sorted);
    return perm;
}

std::vector<std::int64_t> fps(const PointCloud& pc, std::int64_t m, std::int64_t seed_index) {
    const std::int64_t n = pc.size();
    if (m < 1 || m > n)
        throw std::invalid_argument("fps: requested " + std::to_string(m) + " points from " +
                                    std::to_string(n));
    if (seed_index < 0 || seed_index >= n) throw std::invalid_argument("fps: seed index out of range");
    std::vector<std::int64_t> picked;
    picked.reserve(static_cast<std::size_t>(m));
    std::vector<double> min_sq(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    std::int64_t cur = seed_index;
    picked.push_back(cur);
    for (std::int64_t step = 1; step < m; ++step) {
        const double* cp = pc.point(cur);
        double best = -1.0;
        std::int64_t best_i = -1;
        for (std::int64_t i = 0; i < n; ++i) {
            double& d = min_sq[static_cast<std::size_t>(i)];
            d = std::min(d, sqdist(pc.point(i), cp));
            if (d > best) {  // strict keeps the smallest index on ties
                best = d;
                best_i = i;
            }
        }
        cur = best_i;
        picked.push_back(cur);
    }
    return picked;
}

std::vector<std::int64_t> knn(const double* query, std::int64_t q, const double* base,
                              std::int64_t b, int k) {
    if (k < 1 || k > b)
        throw std::invalid_argument("knn: k=" + std::to_string(k) + " with base of " +
                                    std::to_string(b) + " points");
    std::vector<std::int64_t> out(static_cast<std::size_t>(q) * static_cast<std::size_t>(k));
    std::vector<std::pair<double, std::int64_t>> cand(static_cast<std::size_t>(b));
    for (std::int64_t qi = 0; qi < q; ++qi) {
        const double* qp = query + qi * 3;
        for (std::int64_t i = 0; i < b; ++i) cand[static_cast<std::size_t>(i)] = {sqdist(qp, base + i * 3), i};
        std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
        for (int j = 0; j < k; ++j) out[static_cast<std::size_t>(qi) * k + j] = cand[static_cast<std::size_t>(j)].second;
    }
    return out;
}

namespace {

struct CellKey {
    std::int64_t x, y, z;
    bool operator==(const CellKey& o) const { return x == o.x && y == o.y && z == o.z; }
};

struct CellKeyHash {
    std::size_t operator()(const CellKey& k) const {
        std::uint64_t h = splitmix64(static_cast<std::uint64_t>(k.x));
        h = splitmix64(h ^ static_cast<std::uint64_t>(k.y));
        h = splitmix64(h ^ static_cast<std::uint64_t>(k.z));
        return static_cast<std::size_t>(h);
    }
};

}  // namespace

RadiusGraph radius_graph_celllist(const double* coords, std::int64_t n, double r) {
    if (!(r > 0.0) || !std::isfinite(r))
        throw std::invalid_argument("radius_graph: radius must be finite and positive");
    RadiusGraph g;
    g.vertex_count = n;
    g.radius = r;
    const double inv_r = 1.0 / r;
    std::unordered_map<CellKey, std::vector<std::int32_t>, CellKeyHash> cells;
    cells.reserve(static_cast<std::size_t>(n));
    auto cell_of = [&](std::int64_t i) {
        return CellKey{static_cast<std::int64_t>(std::floor(coords[i * 3] * inv_r)),
                       static_cast<std::int64_t>(std::floor(coords[i * 3 + 1] * inv_r)),
                       static_cast<std::int64_t>(std::floor(coords[i * 3 + 2] * inv_r))};
    };
    for (std::int64_t i = 0; i < n; ++i) cells[cell_of(i)].push_back(static_cast<std::int32_t>(i));

    const double r_sq = r * r;
    std::vector<std::int32_t> nbrs;
    for (std::int64_t i = 0; i < n; ++i) {
        const CellKey c = cell_of(i);
        nbrs.clear();
        for (std::int64_t dx = -1; dx <= 1; ++dx)
            for (std::int64_t dy = -1; dy <= 1; ++dy)
                for (std::int64_t dz = -1; dz <= 1; ++dz) {
                    auto it = cells.find(CellKey{c.x + dx, c.y + dy, c.z + dz});
                    if (it == cells.end()) continue;
                    for (std::int32_t j : it->second) {
                        if (j == i) continue;
                        if (sqdist(coords + i * 3, coords + static_cast<std::int64_t>(j) * 3) < r_sq)
                            nbrs.push_back(j);
                    }
                }
        std::sort(nbrs.begin(), nbrs.end());
        for (std::int32_t j : nbrs) g.edges.emplace_back(static_cast<std::int32_t>(i), j);
    }
    return g;
}

RadiusGraph radius_graph_bruteforce(const double* coords, std::int64_t n, double r) {
    if (!(r > 0.0) || !std::isfinite(r))
        throw std::invalid_argument("radius_graph: radius must be finite and positive");
    RadiusGraph g;
    g.vertex_count = n;
    g.radius = r;
    const double r_sq = r * r;
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
            if (i == j) continue;
            if (sqdist(coords + i * 3, coords + j * 3) < r_sq)
                g.edges.emplace_back(static_cast<std::int32_t>(i), static_cast<std::int32_t>(j));
        }
    return g;
}

std::int64_t ScalePyramid::visible_count(std::int64_t s) const {
    const auto& v = scales[static_cast<std::size_t>(s)].visible;
    std::int64_t c = 0;
    for (std::uint8_t b : v) c += b;
    return c;
}

std::vector<std::int64_t> ScalePyramid::visible_indices(std::int64_t s) const {
    const auto& v = scales[static_cast<std::size_t>(s)].visible;
    std::vector<std::int64_t> out;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (v[i]) out.push_back(static_cast<std::int64_t>(i));
    return out;
}

ScalePyramid build_pyramid(const PointCloud& pc, const std::vector<std::int64_t>& scale_sizes,
                           const std::vector<int>& ks, std::uint64_t seed) {
    const std::int64_t n = pc.size();
    if (scale_sizes.empty() || scale_sizes.size() != ks.size())
        throw std::invalid_argument("build_pyramid: scale_sizes and ks must pair up");
    if (scale_sizes[0] != n)
        throw std::invalid_argument("build_pyramid: first scale size " + std::to_string(scale_sizes[0]) +
                                    " != cloud size " + std::to_string(n));
    for (std::size_t s = 1; s < scale_sizes.size(); ++s) {
        if (scale_sizes[s] >= scale_sizes[s - 1])
            throw std::invalid_argument("build_pyramid: scale sizes must strictly decrease");
        if (scale_sizes[s] < 1) throw std::invalid_argument("build_pyramid: empty scale");
    }
    for (std::size_t s = 0; s < ks.size(); ++s) {
        const std::int64_t base = s == 0 ? scale_sizes[0] : scale_sizes[s - 1];
        if (ks[s] < 1 || ks[s] > base)
            throw std::invalid_argument("build_pyramid: k=" + std::to_string(ks[s]) +
                                        " too large for scale of " + std::to_string(base));
    }

    ScalePyramid pyr;
    pyr.scales.resize(scale_sizes.size());

    // finest scale: the input itself, grouped within itself
    auto& s0 = pyr.scales[0];
    s0.size = n;
    s0.k = ks[0];
    s0.coords = pc.coords;
    s0.parent_index.resize(static_cast<std::size_t>(n));
    std::iota(s0.parent_index.begin(), s0.parent_index.end(), 0);
    s0.neighbors = knn(s0.coords.data(), n, s0.coords.data(), n, ks[0]);
    s0.visible.assign(static_cast<std::size_t>(n), 1);

    PointCloud prev{pc.coords};
    for (std::size_t s = 1; s < scale_sizes.size(); ++s) {
        auto& sc = pyr.scales[s];
        sc.size = scale_sizes[s];
        sc.k = ks[s];
        const std::int64_t seed_index =
            seed == 0 ? 0 : static_cast<std::int64_t>(derive_seed(seed, s) % static_cast<std::uint64_t>(prev.size()));
        sc.parent_index = fps(prev, sc.size, seed_index);
        sc.coords.resize(static_cast<std::size_t>(sc.size) * 3);
        for (std::int64_t i = 0; i < sc.size; ++i) {
            const double* p = prev.point(sc.parent_index[static_cast<std::size_t>(i)]);
            sc.coords[i * 3] = p[0];
            sc.coords[i * 3 + 1] = p[1];
            sc.coords[i * 3 + 2] = p[2];
        }
        sc.neighbors = knn(sc.coords.data(), sc.size, prev.coords.data(), prev.size(), sc.k);
        sc.visible.assign(static_cast<std::size_t>(sc.size), 1);
        prev.coords = sc.coords;
    }
    return pyr;
}

void apply_multiscale_mask(ScalePyramid& pyr, double ratio, std::uint64_t seed) {
    if (!(ratio >= 0.0) || ratio >= 1.0)
        throw std::invalid_argument("apply_multiscale_mask: ratio must lie in [0, 1)");
    const std::int64_t m = pyr.num_scales();
    auto& coarse = pyr.scales[static_cast<std::size_t>(m - 1)];
    const std::int64_t keep = static_cast<std::int64_t>(
        std::floor((1.0 - ratio) * static_cast<double>(coarse.size)));
    if (keep == coarse.size) {
        // nothing masked at the coarsest scale: skip back-projection, which
        // would otherwise hide points no grouping list happens to cover
        for (auto& sc : pyr.scales) sc.visible.assign(static_cast<std::size_t>(sc.size), 1);
        return;
    }

    // partial Fisher-Yates over the coarsest indices
    std::vector<std::int64_t> order(static_cast<std::size_t>(coarse.size));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, 0x6d61736bULL));
    for (std::int64_t i = 0; i < keep; ++i) {
        const std::int64_t j =
            i + static_cast<std::int64_t>(rng.uniform_index(static_cast<std::uint64_t>(coarse.size - i)));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    coarse.visible.assign(static_cast<std::size_t>(coarse.size), 0);
    for (std::int64_t i = 0; i < keep; ++i) coarse.visible[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;

    // back-project: a finer point is visible iff it appears in the grouping
    // list of some visible point one scale up
    for (std::int64_t s = m - 2; s >= 0; --s) {
        auto& fine = pyr.scales[static_cast<std::size_t>(s)];
        const auto& up = pyr.scales[static_cast<std::size_t>(s + 1)];
        fine.visible.assign(static_cast<std::size_t>(fine.size), 0);
        for (std::int64_t i = 0; i < up.size; ++i) {
            if (!up.visible[static_cast<std::size_t>(i)]) continue;
            for (int j = 0; j < up.k; ++j)
                fine.visible[static_cast<std::size_t>(up.neighbors[static_cast<std::size_t>(i) * up.k + j])] = 1;
        }
    }
}

ScalePyramid override_masked_coords(const ScalePyramid& pyr, std::uint64_t seed) {
    ScalePyramid out = pyr;
    Rng rng(derive_seed(seed ? seed : 1, 0x736372616dULL));
    for (auto& sc : out.scales) {
        for (std::int64_t i = 0; i < sc.size; ++i) {
            if (sc.visible[static_cast<std::size_t>(i)]) continue;
            for (int a = 0; a < 3; ++a)
                sc.coords[i * 3 + a] = seed == 0 ? 0.0 : rng.uniform(-10.0, 10.0);
        }
    }
    return out;
}

}  // namespace prwkv
