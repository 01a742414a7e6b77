#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace prwkv {

struct PointCloud {
    std::vector<double> coords;  // n x 3, row-major

    std::int64_t size() const { return static_cast<std::int64_t>(coords.size() / 3); }
    const double* point(std::int64_t i) const { return coords.data() + i * 3; }
};

// Centroid to the origin, max point norm scaled to 1. A cloud of identical
// points degenerates to all zeros.
PointCloud normalize(const PointCloud& pc);

// Sorts points lexicographically by (x, y, z) so downstream sampling does not
// depend on the input ordering. Returns the permutation applied.
std::vector<std::int64_t> canonical_order(PointCloud& pc);

// Greedy farthest-point selection. First pick is seed_index; every next pick
// maximizes the min squared distance to the selected set, ties to the
// smallest index.
std::vector<std::int64_t> fps(const PointCloud& pc, std::int64_t m, std::int64_t seed_index = 0);

// Per query, the k base indices with smallest Euclidean distance, ascending;
// distance ties break to the smaller index. Returns q*k indices, row-major.
std::vector<std::int64_t> knn(const double* query, std::int64_t q, const double* base,
                              std::int64_t b, int k);

struct RadiusGraph {
    std::int64_t vertex_count = 0;
    double radius = 0.0;
    // every ordered pair (i, j), i != j, with ||x_i - x_j|| < r; sorted by
    // (i, j) so rows incident to a vertex are contiguous
    std::vector<std::pair<std::int32_t, std::int32_t>> edges;
};

RadiusGraph radius_graph_celllist(const double* coords, std::int64_t n, double r);
RadiusGraph radius_graph_bruteforce(const double* coords, std::int64_t n, double r);

inline RadiusGraph radius_graph_celllist(const PointCloud& pc, double r) {
    return radius_graph_celllist(pc.coords.data(), pc.size(), r);
}
inline RadiusGraph radius_graph_bruteforce(const PointCloud& pc, double r) {
    return radius_graph_bruteforce(pc.coords.data(), pc.size(), r);
}

struct ScalePyramid {
    struct Scale {
        std::int64_t size = 0;
        int k = 0;
        std::vector<std::int64_t> parent_index;  // into the previous scale (scale 0: identity)
        std::vector<double> coords;              // size x 3
        std::vector<std::int64_t> neighbors;     // size x k, into the previous scale
                                                 // (scale 0: into scale 0 itself)
        std::vector<std::uint8_t> visible;       // filled by apply_multiscale_mask
    };
    std::vector<Scale> scales;

    std::int64_t num_scales() const { return static_cast<std::int64_t>(scales.size()); }
    std::int64_t visible_count(std::int64_t s) const;
    std::vector<std::int64_t> visible_indices(std::int64_t s) const;
};

// scale_sizes must start at pc.size() and strictly decrease; ks pairs with
// scale_sizes. seed 0 keeps the FPS seed point at index 0.
ScalePyramid build_pyramid(const PointCloud& pc, const std::vector<std::int64_t>& scale_sizes,
                           const std::vector<int>& ks, std::uint64_t seed = 0);

// Marks floor((1-ratio)*size) uniformly random points visible at the coarsest
// scale, then back-projects visibility fine-ward through the grouping lists.
void apply_multiscale_mask(ScalePyramid& pyr, double ratio, std::uint64_t seed);

// Copy of the pyramid with every masked point's coordinates replaced (zeros
// when seed == 0, random noise otherwise). Indices, neighbor lists and
// visibility are untouched; encoders must be insensitive to this.
ScalePyramid override_masked_coords(const ScalePyramid& pyr, std::uint64_t seed);

// ---- point-cloud files -------------------------------------------------
// Text: one "x y z" per line. Binary: magic "PCB1", u64 count, then n
// little-endian float32 triplets.

PointCloud load_cloud_text(const std::string& path);
void save_cloud_text(const PointCloud& pc, const std::string& path);
PointCloud load_cloud_binary(const std::string& path);
void save_cloud_binary(const PointCloud& pc, const std::string& path);
// sniffs the magic to pick the format
PointCloud load_cloud(const std::string& path);

}  // namespace prwkv
