#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "prwkv/pointops.hpp"

namespace prwkv {

PointCloud load_cloud_text(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open point-cloud file: " + path);
    PointCloud pc;
    std::string line;
    std::int64_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream is(line);
        double x, y, z;
        if (!(is >> x >> y >> z))
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected \"x y z\"");
        pc.coords.push_back(x);
        pc.coords.push_back(y);
        pc.coords.push_back(z);
    }
    if (pc.coords.empty()) throw std::runtime_error("empty point-cloud file: " + path);
    return pc;
}

void save_cloud_text(const PointCloud& pc, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open point-cloud file for writing: " + path);
    f.precision(17);
    for (std::int64_t i = 0; i < pc.size(); ++i) {
        const double* p = pc.point(i);
        f << p[0] << ' ' << p[1] << ' ' << p[2] << '\n';
    }
}

PointCloud load_cloud_binary(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open point-cloud file: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "PCB1", 4) != 0)
        throw std::runtime_error("not a binary point-cloud file (bad magic): " + path);
    std::uint64_t n = 0;
    f.read(reinterpret_cast<char*>(&n), sizeof(n));
    if (!f) throw std::runtime_error("truncated point-cloud file: " + path);
    std::vector<float> buf(static_cast<std::size_t>(n) * 3);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) throw std::runtime_error("truncated point-cloud file: " + path);
    PointCloud pc;
    pc.coords.assign(buf.begin(), buf.end());
    return pc;
}

void save_cloud_binary(const PointCloud& pc, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open point-cloud file for writing: " + path);
    f.write("PCB1", 4);
    const std::uint64_t n = static_cast<std::uint64_t>(pc.size());
    f.write(reinterpret_cast<const char*>(&n), sizeof(n));
    std::vector<float> buf(pc.coords.begin(), pc.coords.end());
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

PointCloud load_cloud(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open point-cloud file: " + path);
    char magic[4] = {0, 0, 0, 0};
    f.read(magic, 4);
    f.close();
    if (std::memcmp(magic, "PCB1", 4) == 0) return load_cloud_binary(path);
    return load_cloud_text(path);
}

}  // namespace prwkv
