#include "srcd/data_pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "srcd/checkpoint.hpp"
#include "srcd/image_io.hpp"

namespace srcd::data {
namespace F = torch::nn::functional;

namespace {

torch::Tensor as_batch(const torch::Tensor& t) {
  require(t.dim() == 3 || t.dim() == 4, "expected [C,H,W] or [B,C,H,W], got " + shape_string(t));
  return t.dim() == 3 ? t.unsqueeze(0) : t;
}

torch::Tensor like_input(const torch::Tensor& batched, const torch::Tensor& original) {
  return original.dim() == 3 ? batched.squeeze(0) : batched;
}

}  // namespace

void validate_scene(const RawScenePair& scene) {
  const auto& t1 = scene.image_t1;
  const auto& t2 = scene.image_t2;
  const auto& gt = scene.gt_mask;
  require(t1.dim() == 3 && t2.dim() == 3 && gt.dim() == 3,
          "scene '" + scene.name + "': expected [C,H,W] rasters");
  require(height_of(t1) == height_of(t2) && width_of(t1) == width_of(t2) &&
              height_of(t1) == height_of(gt) && width_of(t1) == width_of(gt),
          "scene '" + scene.name + "': image/mask sizes differ (" + shape_string(t1) + ", " +
              shape_string(t2) + ", " + shape_string(gt) + ")");
  require(gt.size(0) == 1, "scene '" + scene.name + "': mask must have one channel");
}

std::vector<PatchWindow> patch_grid(int64_t height, int64_t width, int64_t patch_size) {
  require(patch_size >= 16, "patch_size must be >= 16");
  require(height >= patch_size && width >= patch_size,
          "scene " + std::to_string(height) + "x" + std::to_string(width) +
              " is smaller than one patch of " + std::to_string(patch_size));
  std::vector<PatchWindow> grid;
  const int64_t rows = height / patch_size;
  const int64_t cols = width / patch_size;
  grid.reserve(static_cast<size_t>(rows * cols));
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t c = 0; c < cols; ++c) grid.push_back({r * patch_size, c * patch_size});
  }
  return grid;
}

std::vector<PatchTriple> crop_to_patches(const RawScenePair& scene, int64_t patch_size) {
  validate_scene(scene);
  const auto grid = patch_grid(height_of(scene.image_t1), width_of(scene.image_t1), patch_size);
  std::vector<PatchTriple> patches;
  patches.reserve(grid.size());
  auto window = [patch_size](const torch::Tensor& t, const PatchWindow& w) {
    return t.narrow(1, w.row, patch_size).narrow(2, w.col, patch_size);
  };
  for (const auto& w : grid) {
    patches.push_back({scene.name + "_r" + std::to_string(w.row) + "_c" + std::to_string(w.col),
                       scene.name, w, window(scene.image_t1, w), window(scene.image_t2, w),
                       window(scene.gt_mask, w)});
  }
  return patches;
}

DegradeMethod parse_degrade_method(const std::string& name) {
  if (name == "bicubic") return DegradeMethod::Bicubic;
  if (name == "area") return DegradeMethod::Area;
  throw std::invalid_argument("unknown degrade method: " + name);
}

std::string to_string(DegradeMethod method) {
  return method == DegradeMethod::Bicubic ? "bicubic" : "area";
}

ImageTensor degrade(const ImageTensor& hr, int factor, DegradeMethod method) {
  require(factor == 4 || factor == 8, "degrade factor must be 4 or 8, got " + std::to_string(factor));
  auto x = as_batch(hr);
  const int64_t h = x.size(2);
  const int64_t w = x.size(3);
  require(h % factor == 0 && w % factor == 0,
          "image " + std::to_string(h) + "x" + std::to_string(w) + " not divisible by " +
              std::to_string(factor));
  torch::Tensor out;
  if (method == DegradeMethod::Area) {
    out = F::avg_pool2d(x, F::AvgPool2dFuncOptions(factor).stride(factor));
  } else {
    out = F::interpolate(x, F::InterpolateFuncOptions()
                                .size(std::vector<int64_t>{h / factor, w / factor})
                                .mode(torch::kBicubic)
                                .align_corners(false)
                                .antialias(true));
  }
  return like_input(out.clamp(0.0, 1.0), hr);
}

ImageTensor bicubic_upsample(const ImageTensor& lr, int factor) {
  require(factor >= 1, "upsample factor must be >= 1");
  auto x = as_batch(lr);
  if (factor == 1) return like_input(x.clamp(0.0, 1.0), lr);
  auto out = F::interpolate(x, F::InterpolateFuncOptions()
                                   .size(std::vector<int64_t>{x.size(2) * factor, x.size(3) * factor})
                                   .mode(torch::kBicubic)
                                   .align_corners(false));
  return like_input(out.clamp(0.0, 1.0), lr);
}

PatchPair make_patch_pair(const PatchTriple& triple, int scale, DegradeMethod method) {
  require(scale == 1 || scale == 4 || scale == 8, "scale must be 1, 4 or 8");
  PatchPair pair;
  pair.patch_id = triple.patch_id;
  pair.source = triple.source;
  pair.window = triple.window;
  pair.scale = scale;
  pair.hr_t1 = triple.hr_t1.contiguous();
  pair.hr_t2 = triple.hr_t2.contiguous();
  pair.gt = triple.gt.contiguous();
  if (scale == 1) {
    pair.lr_t2 = pair.hr_t2;
    pair.bicubic_t2 = pair.hr_t2;
  } else {
    pair.lr_t2 = degrade(pair.hr_t2, scale, method);
    pair.bicubic_t2 = bicubic_upsample(pair.lr_t2, scale);
  }
  return pair;
}

std::vector<PatchPair> augment_rotations(const PatchPair& pair, DegradeMethod method) {
  require(height_of(pair.hr_t1) == width_of(pair.hr_t1), "rotation augmentation needs square patches");
  std::vector<PatchPair> out;
  out.reserve(4);
  out.push_back(pair);
  for (int k = 1; k < 4; ++k) {
    PatchTriple rotated{pair.patch_id + "_rot" + std::to_string(90 * k), pair.source, pair.window,
                        torch::rot90(pair.hr_t1, k, {1, 2}), torch::rot90(pair.hr_t2, k, {1, 2}),
                        torch::rot90(pair.gt, k, {1, 2})};
    out.push_back(make_patch_pair(rotated, pair.scale, method));
  }
  return out;
}

SplitIndices split_indices(size_t n, SplitRatios ratios, uint64_t seed) {
  require(ratios.train > 0 && ratios.val > 0 && ratios.test > 0, "split ratios must be positive");
  const size_t total = static_cast<size_t>(ratios.train + ratios.val + ratios.test);
  require(n >= total, "cannot split " + std::to_string(n) + " patches into " +
                          std::to_string(total) + " parts");
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const size_t n_val = n * static_cast<size_t>(ratios.val) / total;
  const size_t n_test = n * static_cast<size_t>(ratios.test) / total;
  const size_t n_train = n - n_val - n_test;
  SplitIndices split;
  split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                   order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return split;
}

DatasetSplit split_dataset(std::vector<PatchPair> patches, SplitRatios ratios, uint64_t seed) {
  require(!patches.empty(), "cannot split an empty patch list");
  const auto idx = split_indices(patches.size(), ratios, seed);
  DatasetSplit split;
  split.split_seed = seed;
  auto take = [&patches](const std::vector<size_t>& which, std::vector<PatchPair>& into) {
    into.reserve(which.size());
    for (size_t i : which) into.push_back(std::move(patches[i]));
  };
  take(idx.train, split.train);
  take(idx.val, split.val);
  take(idx.test, split.test);
  return split;
}

std::vector<RawScenePair> load_scene_dir(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  for (const char* sub : {"A", "B", "label"}) {
    if (!fs::is_directory(root / sub)) {
      throw DatasetError("dataset layout missing directory: " + (root / sub).string());
    }
  }
  auto is_raster = [](const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    return ext == ".png" || ext == ".tif" || ext == ".tiff";
  };
  std::set<fs::path> names;
  for (const auto& entry : fs::directory_iterator(root / "A")) {
    if (entry.is_regular_file() && is_raster(entry.path())) names.insert(entry.path().filename());
  }
  if (names.empty()) throw DatasetError("no rasters in " + (root / "A").string());

  std::vector<RawScenePair> scenes;
  for (const auto& name : names) {
    for (const char* sub : {"B", "label"}) {
      if (!fs::exists(root / sub / name)) {
        throw DatasetError("no matching " + std::string(sub) + " raster for " + name.string());
      }
    }
    RawScenePair scene{name.stem().string(), io::read_image(root / "A" / name),
                       io::read_image(root / "B" / name), io::read_mask(root / "label" / name)};
    try {
      validate_scene(scene);
    } catch (const std::invalid_argument& e) {
      throw DatasetError(e.what());
    }
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

void write_scene_dir(const std::filesystem::path& root, const std::vector<RawScenePair>& scenes) {
  for (const auto& scene : scenes) {
    validate_scene(scene);
    const auto file = scene.name + ".png";
    io::write_image_png(root / "A" / file, scene.image_t1);
    io::write_image_png(root / "B" / file, scene.image_t2);
    io::write_mask_png(root / "label" / file, scene.gt_mask);
  }
}

void write_manifest(const std::filesystem::path& path, const DatasetSplit& split) {
  std::string content;
  auto emit = [&content](const std::vector<PatchPair>& pairs, const char* name) {
    for (const auto& p : pairs) {
      nlohmann::ordered_json record{{"patch_id", p.patch_id},
                                    {"source", p.source},
                                    {"row", p.window.row},
                                    {"col", p.window.col},
                                    {"split", name}};
      content += record.dump() + "\n";
    }
  };
  emit(split.train, "train");
  emit(split.val, "val");
  emit(split.test, "test");
  io::write_file_atomic(path, content);
}

DatasetSplit prepare_dataset(const std::vector<RawScenePair>& scenes, const DatasetOptions& options) {
  std::vector<PatchPair> pairs;
  for (const auto& scene : scenes) {
    for (const auto& triple : crop_to_patches(scene, options.patch_size)) {
      pairs.push_back(make_patch_pair(triple, options.scale, options.method));
    }
  }
  auto split = split_dataset(std::move(pairs), options.ratios, options.seed);
  if (options.augment_train) {
    std::vector<PatchPair> augmented;
    augmented.reserve(split.train.size() * 4);
    for (const auto& p : split.train) {
      for (auto& r : augment_rotations(p, options.method)) augmented.push_back(std::move(r));
    }
    split.train = std::move(augmented);
  }
  return split;
}

}  // namespace srcd::data
