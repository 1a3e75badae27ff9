#pragma once

// Parameter checkpoint format shared by the generator, discriminator, change
// network and optimizer state.
//
// Layout of a .ckpt file:
//   line 1: "SRCDCKPT"
//   line 2: format version (decimal)
//   line 3: byte length L of the manifest
//   L bytes: JSON manifest
//       { "version": 1, "kind": "...", "meta": {...},
//         "tensors": [ { "name", "dtype", "shape", "offset", "nbytes" }, ... ] }
//   payload: raw little-endian tensor data; offsets are relative to the
//            first payload byte.
//
// Files are written atomically (temp file + rename).

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "srcd/common.hpp"

namespace srcd::io {

inline constexpr int kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  torch::Tensor value;
};

struct Checkpoint {
  std::string kind;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  /// Throws CheckpointError when absent.
  const torch::Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Parameters followed by buffers, in registration order.
std::vector<NamedTensor> module_state(const torch::nn::Module& module);

/// Copies every parameter and buffer of `module` from the checkpoint. Missing
/// names, extra names or shape differences raise CheckpointError.
void load_module_state(torch::nn::Module& module, const Checkpoint& checkpoint);

/// Writes `content` to `path` through a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace srcd::io
