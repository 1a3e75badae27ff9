#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "srcd/data_pipeline.hpp"

namespace srcd::data {

/// Synthetic bi-temporal scenes: a shared textured background with
/// rectangles/ellipses that are added, removed or moved between T1 and T2.
struct SynthConfig {
  int64_t height = 64;
  int64_t width = 64;
  int min_shapes = 2;
  int max_shapes = 5;
  int64_t min_shape_size = 8;
  int64_t max_shape_size = 20;
  double change_probability = 0.5;
  /// Amplitude of the background texture around its base colour.
  double texture_amplitude = 0.1;
  /// Independent per-pixel noise added to T2 only.
  double photometric_noise = 0.0;

  void validate() const;
};

enum class ShapeKind { Rectangle, Ellipse };

struct Shape {
  int id = 0;
  ShapeKind kind = ShapeKind::Rectangle;
  int64_t top = 0;
  int64_t left = 0;
  int64_t height = 1;
  int64_t width = 1;
  std::array<float, 3> color{};
};

/// Topmost shape id per pixel (-1 where no shape), [H,W] int64. Later shapes
/// paint over earlier ones.
torch::Tensor shape_id_map(int64_t height, int64_t width, std::span<const Shape> shapes);

/// Paints `shapes` over a [3,H,W] background.
ImageTensor render_shapes(const ImageTensor& background, std::span<const Shape> shapes);

/// 1 where the topmost shape differs between the two timestamps, i.e. where a
/// shape was added or removed.
ChangeMask change_mask(int64_t height, int64_t width, std::span<const Shape> shapes_t1,
                       std::span<const Shape> shapes_t2);

/// Smooth random texture around a base colour, [3,H,W] in [0,1].
ImageTensor make_background(int64_t height, int64_t width, double amplitude, std::mt19937_64& rng);

/// Deterministic under `seed`; scenes are named "synth_0000", ...
std::vector<RawScenePair> synth_generate(const SynthConfig& config, uint64_t seed, int count);

}  // namespace srcd::data
