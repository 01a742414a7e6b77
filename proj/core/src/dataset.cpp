#include "prwkv/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "prwkv/rng.hpp"

namespace prwkv {

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

void push(std::vector<double>& v, double x, double y, double z) {
    v.push_back(x);
    v.push_back(y);
    v.push_back(z);
}

void sphere_point(Rng& rng, std::vector<double>& v) {
    // normalized Gaussian triple
    double x = rng.normal(), y = rng.normal(), z = rng.normal();
    double n = std::sqrt(x * x + y * y + z * z);
    while (n < 1e-12) {
        x = rng.normal();
        y = rng.normal();
        z = rng.normal();
        n = std::sqrt(x * x + y * y + z * z);
    }
    push(v, x / n, y / n, z / n);
}

void cube_point(Rng& rng, std::vector<double>& v) {
    // surface of [-1, 1]^3; faces share equal area
    const int face = static_cast<int>(rng.uniform_index(6));
    const double a = rng.uniform(-1.0, 1.0);
    const double b = rng.uniform(-1.0, 1.0);
    const double s = face % 2 == 0 ? 1.0 : -1.0;
    switch (face / 2) {
        case 0: push(v, s, a, b); break;
        case 1: push(v, a, s, b); break;
        default: push(v, a, b, s); break;
    }
}

void torus_point(Rng& rng, std::vector<double>& v) {
    // major radius 1, minor 0.4; area element needs rejection in theta
    const double r_minor = 0.4;
    double theta;
    while (true) {
        theta = rng.uniform(0.0, kTau);
        const double accept = (1.0 + r_minor * std::cos(theta)) / (1.0 + r_minor);
        if (rng.uniform() < accept) break;
    }
    const double phi = rng.uniform(0.0, kTau);
    const double ring = 1.0 + r_minor * std::cos(theta);
    push(v, ring * std::cos(phi), ring * std::sin(phi), r_minor * std::sin(theta));
}

void cylinder_point(Rng& rng, std::vector<double>& v) {
    // radius 0.7, z in [-1, 1], capped; areas: side 2*pi*r*h, caps 2*pi*r^2
    const double r = 0.7;
    const double side_area = kTau * r * 2.0;
    const double cap_area = kTau * r * r;  // two caps combined: 2 * pi r^2
    const double pick = rng.uniform(0.0, side_area + cap_area);
    const double phi = rng.uniform(0.0, kTau);
    if (pick < side_area) {
        push(v, r * std::cos(phi), r * std::sin(phi), rng.uniform(-1.0, 1.0));
    } else {
        const double rr = r * std::sqrt(rng.uniform());
        const double z = rng.uniform() < 0.5 ? -1.0 : 1.0;
        push(v, rr * std::cos(phi), rr * std::sin(phi), z);
    }
}

void cone_point(Rng& rng, std::vector<double>& v) {
    // apex (0,0,1), base circle radius 1 at z = -1
    const double slant = std::sqrt(1.0 + 4.0);  // sqrt(r^2 + h^2)
    const double side_area = kTau / 2.0 * slant;   // pi * r * slant
    const double base_area = kTau / 2.0;           // pi * r^2
    const double pick = rng.uniform(0.0, side_area + base_area);
    const double phi = rng.uniform(0.0, kTau);
    if (pick < side_area) {
        const double t = std::sqrt(rng.uniform());  // area-uniform along the slant
        const double rr = t;
        const double z = 1.0 - 2.0 * t;
        push(v, rr * std::cos(phi), rr * std::sin(phi), z);
    } else {
        const double rr = std::sqrt(rng.uniform());
        push(v, rr * std::cos(phi), rr * std::sin(phi), -1.0);
    }
}

}  // namespace

const std::vector<ShapeKind>& default_shape_kinds() {
    static const std::vector<ShapeKind> kinds{ShapeKind::Sphere, ShapeKind::Cube, ShapeKind::Torus,
                                              ShapeKind::Cylinder, ShapeKind::Cone};
    return kinds;
}

ShapeKind shape_kind_from_name(const std::string& name) {
    if (name == "sphere") return ShapeKind::Sphere;
    if (name == "cube") return ShapeKind::Cube;
    if (name == "torus") return ShapeKind::Torus;
    if (name == "cylinder") return ShapeKind::Cylinder;
    if (name == "cone") return ShapeKind::Cone;
    throw std::invalid_argument("unknown shape kind \"" + name + "\"");
}

std::string shape_kind_name(ShapeKind kind) {
    switch (kind) {
        case ShapeKind::Sphere: return "sphere";
        case ShapeKind::Cube: return "cube";
        case ShapeKind::Torus: return "torus";
        case ShapeKind::Cylinder: return "cylinder";
        case ShapeKind::Cone: return "cone";
    }
    throw std::invalid_argument("unknown shape kind");
}

PointCloud gen_shape(ShapeKind kind, std::int64_t n_points, std::uint64_t seed, double jitter) {
    if (n_points < 1) throw std::invalid_argument("gen_shape: need at least one point");
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(kind) + 1));
    PointCloud pc;
    pc.coords.reserve(static_cast<std::size_t>(n_points) * 3);
    for (std::int64_t i = 0; i < n_points; ++i) {
        switch (kind) {
            case ShapeKind::Sphere: sphere_point(rng, pc.coords); break;
            case ShapeKind::Cube: cube_point(rng, pc.coords); break;
            case ShapeKind::Torus: torus_point(rng, pc.coords); break;
            case ShapeKind::Cylinder: cylinder_point(rng, pc.coords); break;
            case ShapeKind::Cone: cone_point(rng, pc.coords); break;
        }
    }
    if (jitter > 0.0) {
        for (double& v : pc.coords) v += rng.normal(0.0, jitter);
    }
    return pc;
}

SyntheticDataset make_classification_dataset(int classes, int train_per_class, int test_per_class,
                                             std::int64_t points, double jitter, std::uint64_t seed) {
    const auto& kinds = default_shape_kinds();
    if (classes < 2 || classes > static_cast<int>(kinds.size()))
        throw std::invalid_argument("dataset: classes must lie in [2, " +
                                    std::to_string(kinds.size()) + "]");
    SyntheticDataset data;
    data.classes = classes;
    for (int cls = 0; cls < classes; ++cls) {
        for (int i = 0; i < train_per_class; ++i) {
            data.train.push_back({gen_shape(kinds[static_cast<std::size_t>(cls)], points,
                                            derive_seed(seed, static_cast<std::uint64_t>(cls), static_cast<std::uint64_t>(i)),
                                            jitter),
                                  cls});
        }
        for (int i = 0; i < test_per_class; ++i) {
            data.test.push_back({gen_shape(kinds[static_cast<std::size_t>(cls)], points,
                                           derive_seed(seed, static_cast<std::uint64_t>(cls),
                                                       0x74657374ULL + static_cast<std::uint64_t>(i)),
                                           jitter),
                                 cls});
        }
    }
    return data;
}

std::vector<PointCloud> make_pretrain_dataset(int samples, std::int64_t points, double jitter,
                                              std::uint64_t seed) {
    const auto& kinds = default_shape_kinds();
    std::vector<PointCloud> out;
    out.reserve(static_cast<std::size_t>(samples));
    for (int i = 0; i < samples; ++i) {
        const ShapeKind kind = kinds[static_cast<std::size_t>(i) % kinds.size()];
        out.push_back(gen_shape(kind, points, derive_seed(seed, 0x707265ULL, static_cast<std::uint64_t>(i)), jitter));
    }
    return out;
}

namespace {

std::vector<double> radial_histogram(const PointCloud& pc, int bins) {
    PointCloud n = normalize(pc);
    std::vector<double> hist(static_cast<std::size_t>(bins), 0.0);
    for (std::int64_t i = 0; i < n.size(); ++i) {
        const double* p = n.point(i);
        const double r = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
        int b = static_cast<int>(r * bins);
        b = std::clamp(b, 0, bins - 1);
        hist[static_cast<std::size_t>(b)] += 1.0;
    }
    for (double& h : hist) h /= static_cast<double>(n.size());
    return hist;
}

}  // namespace

double radial_histogram_baseline(const SyntheticDataset& data, int bins) {
    std::vector<std::vector<double>> centroids(static_cast<std::size_t>(data.classes),
                                               std::vector<double>(static_cast<std::size_t>(bins), 0.0));
    std::vector<int> counts(static_cast<std::size_t>(data.classes), 0);
    for (const auto& s : data.train) {
        const auto h = radial_histogram(s.cloud, bins);
        for (int b = 0; b < bins; ++b) centroids[static_cast<std::size_t>(s.label)][static_cast<std::size_t>(b)] += h[static_cast<std::size_t>(b)];
        ++counts[static_cast<std::size_t>(s.label)];
    }
    for (int c = 0; c < data.classes; ++c) {
        if (counts[static_cast<std::size_t>(c)] == 0) continue;
        for (double& v : centroids[static_cast<std::size_t>(c)]) v /= counts[static_cast<std::size_t>(c)];
    }
    int hits = 0;
    for (const auto& s : data.test) {
        const auto h = radial_histogram(s.cloud, bins);
        int best = 0;
        double best_d = 1e300;
        for (int c = 0; c < data.classes; ++c) {
            double d = 0.0;
            for (int b = 0; b < bins; ++b) {
                const double t = h[static_cast<std::size_t>(b)] - centroids[static_cast<std::size_t>(c)][static_cast<std::size_t>(b)];
                d += t * t;
            }
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        if (best == s.label) ++hits;
    }
    return data.test.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(data.test.size());
}

}  // namespace prwkv
