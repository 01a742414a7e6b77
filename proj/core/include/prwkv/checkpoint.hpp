#pragma once

#include <string>
#include <utility>
#include <vector>

#include "prwkv/tensor.hpp"

namespace prwkv {

// Ordered registry of named parameters; names key checkpoint entries.
class ParamStore {
  public:
    Tensor add(const std::string& name, Tensor t);
    bool contains(const std::string& name) const;
    Tensor get(const std::string& name) const;

    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
    std::vector<Tensor> tensors() const;
    std::int64_t total_parameters() const;
    void zero_grads();

  private:
    std::vector<std::pair<std::string, Tensor>> entries_;
};

// File layout: magic "PRWK", u32 format version, then one record per tensor:
//   u32 name length, name bytes, u32 rank, u64 extents[rank],
//   f64 little-endian values (row-major).
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ParamStore& store, const std::string& path);

// strict=true requires the file and store to hold exactly the same names.
// strict=false loads the intersection (transfer learning); shapes must match
// by name either way.
void load_checkpoint(ParamStore& store, const std::string& path, bool strict = true);

}  // namespace prwkv
