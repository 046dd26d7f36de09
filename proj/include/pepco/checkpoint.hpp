#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pepco/tensor.hpp"

namespace pepco::ad {

// Flat binary parameter file:
//   "PCN1"
//   repeated until EOF:
//     u32 name length, name bytes (UTF-8),
//     u32 rank, rank x u64 extents,
//     product(extents) x f64
// All integers and floats little-endian.
std::string encode_checkpoint(const std::vector<const Param*>& params);
std::vector<Param> decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const std::vector<const Param*>& params);
std::vector<Param> load_checkpoint(const std::filesystem::path& path);

}  // namespace pepco::ad
