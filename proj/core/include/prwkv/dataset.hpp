#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prwkv/pointops.hpp"

namespace prwkv {

enum class ShapeKind { Sphere, Cube, Torus, Cylinder, Cone };

const std::vector<ShapeKind>& default_shape_kinds();
ShapeKind shape_kind_from_name(const std::string& name);
std::string shape_kind_name(ShapeKind kind);

// Uniform surface sampling of the primitive plus Gaussian jitter;
// deterministic per seed, pre-normalization.
PointCloud gen_shape(ShapeKind kind, std::int64_t n_points, std::uint64_t seed, double jitter);

struct LabeledCloud {
    PointCloud cloud;
    int label = 0;
};

struct SyntheticDataset {
    std::vector<LabeledCloud> train;
    std::vector<LabeledCloud> test;
    int classes = 0;
};

// Balanced per-class samples over the first `classes` default kinds.
SyntheticDataset make_classification_dataset(int classes, int train_per_class, int test_per_class,
                                             std::int64_t points, double jitter, std::uint64_t seed);

// Unlabeled mixture over every default kind for masked pretraining.
std::vector<PointCloud> make_pretrain_dataset(int samples, std::int64_t points, double jitter,
                                              std::uint64_t seed);

// Nearest-centroid classifier on radial histograms of the raw coordinates;
// returns test accuracy. Sanity yardstick for generator separability.
double radial_histogram_baseline(const SyntheticDataset& data, int bins = 16);

}  // namespace prwkv
