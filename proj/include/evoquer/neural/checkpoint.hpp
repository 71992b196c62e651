#pragma once

#include <map>
#include <string>
#include <vector>

#include "evoquer/neural/graph.hpp"

namespace evoquer::neural {

// Checkpoint container: "EVQC" magic, u32 version, u32 header length, JSON
// header bytes, u32 block count, then per block u32 name length, name bytes,
// u32 rank, u32 dims[rank], float64 LE row-major payload.
struct Checkpoint {
  std::string header_json;
  std::map<std::string, Mat> blocks;
};

void save_checkpoint(const fs::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const fs::path& path);

}  // namespace evoquer::neural
