#include "srcd/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

namespace srcd::data {
namespace {

bool covers(const Shape& s, int64_t r, int64_t c) {
  if (r < s.top || r >= s.top + s.height || c < s.left || c >= s.left + s.width) return false;
  if (s.kind == ShapeKind::Rectangle) return true;
  const double ry = static_cast<double>(s.height) / 2.0;
  const double rx = static_cast<double>(s.width) / 2.0;
  const double dy = (static_cast<double>(r - s.top) + 0.5 - ry) / ry;
  const double dx = (static_cast<double>(c - s.left) + 0.5 - rx) / rx;
  return dx * dx + dy * dy <= 1.0;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int64_t uniform_int(std::mt19937_64& rng, int64_t lo, int64_t hi) {
  return std::uniform_int_distribution<int64_t>(lo, hi)(rng);
}

Shape random_shape(int id, const SynthConfig& cfg, const std::array<float, 3>& base,
                   std::mt19937_64& rng) {
  Shape s;
  s.id = id;
  s.kind = uniform(rng, 0.0, 1.0) < 0.5 ? ShapeKind::Rectangle : ShapeKind::Ellipse;
  const int64_t max_h = std::min(cfg.max_shape_size, cfg.height);
  const int64_t max_w = std::min(cfg.max_shape_size, cfg.width);
  s.height = uniform_int(rng, std::min(cfg.min_shape_size, max_h), max_h);
  s.width = uniform_int(rng, std::min(cfg.min_shape_size, max_w), max_w);
  s.top = uniform_int(rng, 0, cfg.height - s.height);
  s.left = uniform_int(rng, 0, cfg.width - s.width);
  // Keep shapes visibly distinct from the background.
  for (;;) {
    float contrast = 0.0F;
    for (size_t ch = 0; ch < 3; ++ch) {
      s.color[ch] = static_cast<float>(uniform(rng, 0.0, 1.0));
      contrast = std::max(contrast, std::abs(s.color[ch] - base[ch]));
    }
    if (contrast >= 0.35F) break;
  }
  return s;
}

}  // namespace

void SynthConfig::validate() const {
  require(height > 0 && width > 0, "synthetic scene size must be positive");
  require(change_probability >= 0.0 && change_probability <= 1.0,
          "change probability must lie in [0,1]");
  require(min_shapes >= 0 && max_shapes >= min_shapes, "invalid shape count range");
  require(min_shape_size >= 1 && max_shape_size >= min_shape_size, "invalid shape size range");
  require(texture_amplitude >= 0.0 && photometric_noise >= 0.0, "noise amplitudes must be >= 0");
}

torch::Tensor shape_id_map(int64_t height, int64_t width, std::span<const Shape> shapes) {
  auto ids = torch::full({height, width}, -1, torch::kInt64);
  auto acc = ids.accessor<int64_t, 2>();
  for (const auto& s : shapes) {
    const int64_t r_end = std::min(height, s.top + s.height);
    const int64_t c_end = std::min(width, s.left + s.width);
    for (int64_t r = std::max<int64_t>(0, s.top); r < r_end; ++r) {
      for (int64_t c = std::max<int64_t>(0, s.left); c < c_end; ++c) {
        if (covers(s, r, c)) acc[r][c] = s.id;
      }
    }
  }
  return ids;
}

ImageTensor render_shapes(const ImageTensor& background, std::span<const Shape> shapes) {
  require(background.dim() == 3 && background.size(0) == 3, "background must be [3,H,W]");
  auto image = background.to(torch::kFloat32).contiguous().clone();
  const int64_t h = image.size(1);
  const int64_t w = image.size(2);
  auto acc = image.accessor<float, 3>();
  for (const auto& s : shapes) {
    const int64_t r_end = std::min(h, s.top + s.height);
    const int64_t c_end = std::min(w, s.left + s.width);
    for (int64_t r = std::max<int64_t>(0, s.top); r < r_end; ++r) {
      for (int64_t c = std::max<int64_t>(0, s.left); c < c_end; ++c) {
        if (!covers(s, r, c)) continue;
        for (int64_t ch = 0; ch < 3; ++ch) acc[ch][r][c] = s.color[static_cast<size_t>(ch)];
      }
    }
  }
  return image;
}

ChangeMask change_mask(int64_t height, int64_t width, std::span<const Shape> shapes_t1,
                       std::span<const Shape> shapes_t2) {
  auto a = shape_id_map(height, width, shapes_t1);
  auto b = shape_id_map(height, width, shapes_t2);
  return a.ne(b).to(torch::kFloat32).unsqueeze(0);
}

ImageTensor make_background(int64_t height, int64_t width, double amplitude, std::mt19937_64& rng) {
  std::array<float, 3> base{};
  for (auto& b : base) b = static_cast<float>(uniform(rng, 0.3, 0.7));

  struct Wave {
    double fy, fx, phase;
  };
  std::array<Wave, 3> waves{};
  for (auto& wv : waves) {
    const double period = uniform(rng, 8.0, 32.0);
    const double angle = uniform(rng, 0.0, std::numbers::pi);
    wv.fy = std::sin(angle) * 2.0 * std::numbers::pi / period;
    wv.fx = std::cos(angle) * 2.0 * std::numbers::pi / period;
    wv.phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  }

  auto image = torch::empty({3, height, width}, torch::kFloat32);
  auto acc = image.accessor<float, 3>();
  for (int64_t r = 0; r < height; ++r) {
    for (int64_t c = 0; c < width; ++c) {
      double field = 0.0;
      for (const auto& wv : waves) {
        field += std::sin(wv.fy * static_cast<double>(r) + wv.fx * static_cast<double>(c) + wv.phase);
      }
      const double texture = amplitude * (0.7 * field / 3.0 + 0.3 * uniform(rng, -1.0, 1.0));
      for (int64_t ch = 0; ch < 3; ++ch) {
        acc[ch][r][c] = static_cast<float>(
            std::clamp(static_cast<double>(base[static_cast<size_t>(ch)]) + texture, 0.0, 1.0));
      }
    }
  }
  return image;
}

std::vector<RawScenePair> synth_generate(const SynthConfig& config, uint64_t seed, int count) {
  config.validate();
  require(count >= 0, "scene count must be >= 0");
  std::mt19937_64 rng(seed);
  std::vector<RawScenePair> scenes;
  scenes.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    auto background = make_background(config.height, config.width, config.texture_amplitude, rng);
    std::array<float, 3> base{};
    for (int64_t ch = 0; ch < 3; ++ch) {
      base[static_cast<size_t>(ch)] = background[ch].mean().item<float>();
    }

    const int n_shapes = static_cast<int>(uniform_int(rng, config.min_shapes, config.max_shapes));
    std::vector<Shape> t1;
    for (int k = 0; k < n_shapes; ++k) t1.push_back(random_shape(k, config, base, rng));

    std::vector<Shape> t2;
    for (const auto& s : t1) {
      if (uniform(rng, 0.0, 1.0) >= config.change_probability) {
        t2.push_back(s);
        continue;
      }
      if (uniform(rng, 0.0, 1.0) < 0.5) continue;  // removed
      Shape moved = s;
      moved.top = uniform_int(rng, 0, config.height - s.height);
      moved.left = uniform_int(rng, 0, config.width - s.width);
      t2.push_back(moved);
    }
    if (uniform(rng, 0.0, 1.0) < config.change_probability) {
      t2.push_back(random_shape(n_shapes, config, base, rng));
    }

    auto image_t2 = render_shapes(background, t2);
    if (config.photometric_noise > 0.0) {
      auto acc = image_t2.accessor<float, 3>();
      for (int64_t ch = 0; ch < 3; ++ch) {
        for (int64_t r = 0; r < config.height; ++r) {
          for (int64_t c = 0; c < config.width; ++c) {
            const double v = acc[ch][r][c] + uniform(rng, -config.photometric_noise, config.photometric_noise);
            acc[ch][r][c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
          }
        }
      }
    }

    char name[32];
    std::snprintf(name, sizeof(name), "synth_%04d", i);
    scenes.push_back({name, render_shapes(background, t1), image_t2,
                      change_mask(config.height, config.width, t1, t2)});
  }
  return scenes;
}

}  // namespace srcd::data
