#include "prwkv/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace prwkv {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

Tensor ParamStore::add(const std::string& name, Tensor t) {
    if (contains(name)) throw std::logic_error("duplicate parameter name: " + name);
    t.set_requires_grad(true);
    entries_.emplace_back(name, t);
    return t;
}

bool ParamStore::contains(const std::string& name) const {
    for (const auto& [n, t] : entries_)
        if (n == name) return true;
    return false;
}

Tensor ParamStore::get(const std::string& name) const {
    for (const auto& [n, t] : entries_)
        if (n == name) return t;
    throw std::out_of_range("no parameter named " + name);
}

std::vector<Tensor> ParamStore::tensors() const {
    std::vector<Tensor> out;
    out.reserve(entries_.size());
    for (const auto& [n, t] : entries_) out.push_back(t);
    return out;
}

std::int64_t ParamStore::total_parameters() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : entries_) n += t.numel();
    return n;
}

void ParamStore::zero_grads() {
    for (auto& [name, t] : entries_) {
        Tensor tt = t;
        tt.zero_grad();
    }
}

namespace {

template <typename T>
void write_pod(std::ofstream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool read_pod(std::ifstream& f, T& v) {
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    return static_cast<bool>(f);
}

}  // namespace

void save_checkpoint(const ParamStore& store, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open checkpoint file for writing: " + path);
    f.write("PRWK", 4);
    write_pod(f, kCheckpointVersion);
    for (const auto& [name, t] : store.entries()) {
        write_pod(f, static_cast<std::uint32_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        const auto& shape = t.shape();
        write_pod(f, static_cast<std::uint32_t>(shape.size()));
        for (std::int64_t e : shape) write_pod(f, static_cast<std::uint64_t>(e));
        f.write(reinterpret_cast<const char*>(t.data().data()),
                static_cast<std::streamsize>(t.data().size() * sizeof(double)));
    }
    if (!f) throw std::runtime_error("short write while saving checkpoint: " + path);
}

void load_checkpoint(ParamStore& store, const std::string& path, bool strict) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint file: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "PRWK", 4) != 0)
        throw std::runtime_error("not a checkpoint file (bad magic): " + path);
    std::uint32_t version = 0;
    if (!read_pod(f, version) || version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));

    std::unordered_set<std::string> loaded;
    while (true) {
        std::uint32_t name_len = 0;
        if (!read_pod(f, name_len)) break;  // clean EOF
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        std::uint32_t rank = 0;
        if (!read_pod(f, rank)) throw std::runtime_error("truncated checkpoint: " + path);
        Shape shape(rank);
        for (std::uint32_t i = 0; i < rank; ++i) {
            std::uint64_t e = 0;
            if (!read_pod(f, e)) throw std::runtime_error("truncated checkpoint: " + path);
            shape[i] = static_cast<std::int64_t>(e);
        }
        const std::int64_t n = shape_numel(shape);
        std::vector<double> values(static_cast<std::size_t>(n));
        f.read(reinterpret_cast<char*>(values.data()),
               static_cast<std::streamsize>(values.size() * sizeof(double)));
        if (!f) throw std::runtime_error("truncated checkpoint: " + path);

        if (!store.contains(name)) {
            if (strict) throw std::runtime_error("checkpoint holds unknown parameter \"" + name + "\"");
            continue;
        }
        Tensor t = store.get(name);
        if (t.shape() != shape) {
            throw std::runtime_error("shape mismatch for \"" + name + "\": checkpoint " +
                                     shape_str(shape) + " vs model " + shape_str(t.shape()));
        }
        t.mutable_data() = std::move(values);
        loaded.insert(name);
    }
    if (strict) {
        for (const auto& [name, t] : store.entries()) {
            if (!loaded.count(name))
                throw std::runtime_error("checkpoint is missing parameter \"" + name + "\"");
        }
    }
}

}  // namespace prwkv
