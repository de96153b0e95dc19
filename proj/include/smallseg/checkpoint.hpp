#pragma once

#include <string>
#include <utility>
#include <vector>

#include "smallseg/graph.hpp"

namespace smallseg::ckpt {

/// Single-file archive: config JSON plus named parameter tensors (raw doubles,
/// little-endian). The round trip is bit-exact.
void write_checkpoint(const std::string& path, const std::string& config_json,
                      const ag::ParamStore& store);

struct Loaded {
  std::string config_json;
  std::vector<std::pair<std::string, Tensor>> tensors;
};
Loaded read_checkpoint(const std::string& path);

/// Copies loaded tensors into an existing store by name; throws on missing
/// entries or shape mismatches.
void restore(const Loaded& loaded, ag::ParamStore& store);

}  // namespace smallseg::ckpt
