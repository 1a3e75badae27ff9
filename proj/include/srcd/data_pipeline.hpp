#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "srcd/common.hpp"

namespace srcd::data {

/// A full bi-temporal scene: images [3,H,W] in [0,1], mask [1,H,W] in {0,1}.
struct RawScenePair {
  std::string name;
  ImageTensor image_t1;
  ImageTensor image_t2;
  ChangeMask gt_mask;
};

/// Throws std::invalid_argument on size mismatch or a non-binary mask.
void validate_scene(const RawScenePair& scene);

struct PatchWindow {
  int64_t row = 0;
  int64_t col = 0;
};

/// Top-left corners of the floor(H/P) x floor(W/P) non-overlapping grid,
/// row-major. Trailing rows/columns that do not fill a patch are dropped.
std::vector<PatchWindow> patch_grid(int64_t height, int64_t width, int64_t patch_size);

/// One cropped window of a scene. Tensors are views into the scene.
struct PatchTriple {
  std::string patch_id;
  std::string source;
  PatchWindow window;
  ImageTensor hr_t1;
  ImageTensor hr_t2;
  ChangeMask gt;
};

std::vector<PatchTriple> crop_to_patches(const RawScenePair& scene, int64_t patch_size);

enum class DegradeMethod { Bicubic, Area };

DegradeMethod parse_degrade_method(const std::string& name);
std::string to_string(DegradeMethod method);

/// Downsamples by `factor` (4 or 8). Bicubic uses an antialiased kernel; Area
/// averages each factor x factor block. Output clamped to [0,1].
ImageTensor degrade(const ImageTensor& hr, int factor, DegradeMethod method = DegradeMethod::Bicubic);

/// Bicubic upsampling by `factor` (half-pixel centres), clamped to [0,1].
ImageTensor bicubic_upsample(const ImageTensor& lr, int factor);

/// Training-ready sample. For scale 1, lr_t2 and bicubic_t2 alias hr_t2.
struct PatchPair {
  std::string patch_id;
  std::string source;
  PatchWindow window;
  int scale = 1;
  ImageTensor hr_t1;
  ImageTensor hr_t2;
  ImageTensor lr_t2;
  ImageTensor bicubic_t2;
  ChangeMask gt;
};

/// Builds the LR and bicubic companions of `triple` for scale 1, 4 or 8.
PatchPair make_patch_pair(const PatchTriple& triple, int scale,
                          DegradeMethod method = DegradeMethod::Bicubic);

/// Original plus 90/180/270 degree counter-clockwise rotations. hr_t1, hr_t2
/// and gt rotate jointly; LR/bicubic are regenerated from the rotated hr_t2.
std::vector<PatchPair> augment_rotations(const PatchPair& pair,
                                         DegradeMethod method = DegradeMethod::Bicubic);

struct SplitRatios {
  int train = 8;
  int val = 1;
  int test = 1;
};

struct SplitIndices {
  std::vector<size_t> train;
  std::vector<size_t> val;
  std::vector<size_t> test;
};

/// Shuffles [0, n) under `seed`; val = floor(n*val/total),
/// test = floor(n*test/total), the remainder goes to train.
SplitIndices split_indices(size_t n, SplitRatios ratios, uint64_t seed);

struct DatasetSplit {
  std::vector<PatchPair> train;
  std::vector<PatchPair> val;
  std::vector<PatchPair> test;
  uint64_t split_seed = 0;
};

DatasetSplit split_dataset(std::vector<PatchPair> patches, SplitRatios ratios, uint64_t seed);

/// Loads `{root}/A`, `{root}/B`, `{root}/label` rasters with matching file
/// names (sorted by name). Throws DatasetError for a missing or inconsistent
/// layout.
std::vector<RawScenePair> load_scene_dir(const std::filesystem::path& root);

/// Writes scenes in the same layout as PNG (name + ".png").
void write_scene_dir(const std::filesystem::path& root, const std::vector<RawScenePair>& scenes);

/// One JSON object per line: patch_id, source, row, col, split.
void write_manifest(const std::filesystem::path& path, const DatasetSplit& split);

struct DatasetOptions {
  int64_t patch_size = 256;
  int scale = 1;
  DegradeMethod method = DegradeMethod::Bicubic;
  SplitRatios ratios;
  uint64_t seed = 0;
  bool augment_train = true;
};

/// crop -> pair -> split -> rotate the train split.
DatasetSplit prepare_dataset(const std::vector<RawScenePair>& scenes, const DatasetOptions& options);

}  // namespace srcd::data
