#pragma once

#include <string>

#include "infom/tensor.hpp"

namespace infom {

/// Named-tensor archive: "INFOM1", then per tensor (name length u32, name
/// bytes, rank u32, dims u32 x rank, f64 data), little-endian, in name
/// order. Writing the same set twice gives identical bytes.
void write_checkpoint(const std::string& path, const ParamSet& tensors);
ParamSet read_checkpoint(const std::string& path);

std::string serialize_checkpoint(const ParamSet& tensors);
ParamSet deserialize_checkpoint(const std::string& bytes);

}  // namespace infom
