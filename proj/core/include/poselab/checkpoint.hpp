#pragma once

#include "poselab/tensor.hpp"

#include <string>
#include <vector>

namespace poselab {

struct CheckpointRecord {
    std::string name;
    Tensor value;
};

// Binary format, little-endian:
//   4 bytes magic "PBL1"
//   u64 record count
//   per record: u64 name length, name bytes, u64 rank, u64 extents..., f64 values...
void save_checkpoint(const std::string& path, const std::vector<CheckpointRecord>& records);

// Throws std::runtime_error on bad magic, truncation, or malformed records.
std::vector<CheckpointRecord> load_checkpoint(const std::string& path);

}  // namespace poselab
