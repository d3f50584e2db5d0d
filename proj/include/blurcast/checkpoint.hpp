#pragma once

// Plain-text tensor dump.
//
//   blurcast-checkpoint 1
//   meta <key> <value>          (zero or more)
//   tensor <name> <rank> <d0> ... <d_{rank-1}>
//   <values, space separated, %.17g>
//   ...
//
// Values are written with 17 significant digits, so a save/load round trip
// reproduces every double exactly.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "blurcast/pipeline.hpp"
#include "blurcast/tensor.hpp"

namespace blurcast::checkpoint {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void write(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read(const std::filesystem::path& path);

Checkpoint from_model(const pipeline::ModelParams& params, std::map<std::string, std::string> meta = {});
/// Overwrites every tensor of `params` from the checkpoint. Throws on a
/// missing name or a shape mismatch.
void load_into(const Checkpoint& ckpt, pipeline::ModelParams& params);

}  // namespace blurcast::checkpoint
