#pragma once

// Oracles and fixtures shared by the unit tests and the acceptance runner.
// Nothing here calls into autograd for expected values.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace srcd::support {

/// Self-deleting scratch directory under the system temp dir.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "srcd") {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / (tag + "_" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Result of comparing an analytic gradient with central differences.
struct GradCheck {
  double max_rel_error = 0.0;
  int64_t checked = 0;
  /// Coordinates that only agreed at a smaller step (an activation kink lay
  /// within the first step).
  int64_t refined = 0;
  std::string worst;  // "<tensor>[<flat index>]: analytic vs numeric"
};

/// Relative error with a small absolute floor so exact zeros compare cleanly.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline constexpr double kGradTolerance = 1e-3;

/// Central differences of the scalar `f()` with respect to every element of
/// each tensor in `inputs` (perturbed in place, under NoGrad), compared with
/// the matching entry of `analytic`.
///
/// Each coordinate is tried at `step` first. ReLU-family kinks and max-pool
/// switches within the step make one central difference meaningless, so a
/// coordinate that disagrees is retried at step/10 and step/100 and the best
/// agreement is kept; a wrong gradient disagrees at every step. The absolute
/// floor of the relative error tracks float64 round-off of f at each step.
inline GradCheck finite_difference_check(const std::function<double()>& f, std::vector<torch::Tensor> inputs,
                                         const std::vector<torch::Tensor>& analytic,
                                         const std::vector<std::string>& names, double step = 1e-4) {
  GradCheck out;
  torch::NoGradGuard no_grad;
  const double scale = std::abs(f());
  for (size_t t = 0; t < inputs.size(); ++t) {
    auto flat = inputs[t].view({-1});
    auto grad = analytic[t].contiguous().view({-1});
    auto* data = flat.data_ptr<double>();
    for (int64_t i = 0; i < flat.numel(); ++i) {
      const double a = grad[i].item<double>();
      const double orig = data[i];
      double best = std::numeric_limits<double>::infinity(), best_numeric = 0.0;
      int attempt = 0;
      for (double h = step; attempt < 3 && best > 1e-2 * kGradTolerance; h /= 10.0, ++attempt) {
        data[i] = orig + h;
        const double up = f();
        data[i] = orig - h;
        const double down = f();
        data[i] = orig;
        const double numeric = (up - down) / (2.0 * h);
        const double floor = std::max(1e-6, 1e4 * std::numeric_limits<double>::epsilon() * scale / h);
        const double err = rel_error(a, numeric, floor);
        if (err < best) {
          best = err;
          best_numeric = numeric;
        }
      }
      ++out.checked;
      out.refined += attempt > 1;
      if (best > out.max_rel_error) {
        out.max_rel_error = best;
        std::ostringstream ss;
        ss << names[t] << "[" << i << "]: " << a << " vs " << best_numeric;
        out.worst = ss.str();
      }
    }
  }
  return out;
}

/// Gives every BatchNorm random affine parameters and running statistics, so
/// eval-mode activations do not sit exactly on a ReLU kink.
inline void randomize_batch_norm(torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  for (const auto& m : module.modules()) {
    if (auto* bn = m->as<torch::nn::BatchNorm2d>()) {
      bn->weight.uniform_(0.5, 1.5);
      bn->bias.uniform_(-0.5, 0.5);
      bn->running_mean.uniform_(-0.2, 0.2);
      bn->running_var.uniform_(0.5, 1.5);
    }
  }
}

/// Checks d f / d params of a module, where `loss()` builds a scalar graph.
inline GradCheck module_gradient_check(torch::nn::Module& module, const std::function<torch::Tensor()>& loss) {
  module.zero_grad();
  loss().backward();
  std::vector<torch::Tensor> params, grads;
  std::vector<std::string> names;
  for (auto& item : module.named_parameters()) {
    params.push_back(item.value());
    grads.push_back(item.value().grad().defined() ? item.value().grad().clone()
                                                  : torch::zeros_like(item.value()));
    names.push_back(item.key());
  }
  return finite_difference_check([&] { return loss().item<double>(); }, params, grads, names);
}

/// Checks d f / d x for a tensor input.
inline GradCheck input_gradient_check(torch::Tensor x, const std::function<torch::Tensor(const torch::Tensor&)>& f,
                                      const std::string& name = "input") {
  auto leaf = x.detach().clone().set_requires_grad(true);
  f(leaf).backward();
  auto grad = leaf.grad().clone();
  auto probe = x.detach().clone();
  return finite_difference_check([&] { return f(probe).item<double>(); }, {probe}, {grad}, {name});
}

/// Per-pixel loop: sqrt of summed squared channel differences for [C,H,W].
inline torch::Tensor brute_force_distance(const torch::Tensor& f1, const torch::Tensor& f2) {
  auto a = f1.to(torch::kFloat64).contiguous();
  auto b = f2.to(torch::kFloat64).contiguous();
  const auto c = a.size(0), h = a.size(1), w = a.size(2);
  auto out = torch::zeros({h, w}, torch::kFloat64);
  auto pa = a.accessor<double, 3>();
  auto pb = b.accessor<double, 3>();
  auto po = out.accessor<double, 2>();
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (int64_t k = 0; k < c; ++k) s += (pa[k][y][x] - pb[k][y][x]) * (pa[k][y][x] - pb[k][y][x]);
      po[y][x] = std::sqrt(s);
    }
  return out;
}

/// Element-wise loop mean of squared differences.
inline double brute_force_mse(const torch::Tensor& a, const torch::Tensor& b) {
  auto x = a.to(torch::kFloat64).contiguous().view({-1});
  auto y = b.to(torch::kFloat64).contiguous().view({-1});
  const auto* px = x.data_ptr<double>();
  const auto* py = y.data_ptr<double>();
  double s = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) s += (px[i] - py[i]) * (px[i] - py[i]);
  return s / static_cast<double>(x.numel());
}

struct LoopCounts {
  int64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

inline LoopCounts brute_force_confusion(const torch::Tensor& pred, const torch::Tensor& gt) {
  auto p = pred.to(torch::kInt64).contiguous().view({-1});
  auto g = gt.to(torch::kInt64).contiguous().view({-1});
  LoopCounts c;
  for (int64_t i = 0; i < p.numel(); ++i) {
    const bool pp = p[i].item<int64_t>() != 0;
    const bool gg = g[i].item<int64_t>() != 0;
    if (pp && gg) ++c.tp;
    else if (pp) ++c.fp;
    else if (gg) ++c.fn;
    else ++c.tn;
  }
  return c;
}

/// Straightforward windowed SSIM on [H,W] doubles: 11x11 Gaussian (sigma 1.5),
/// every valid window position, mean of the SSIM map.
inline double brute_force_ssim(const torch::Tensor& a, const torch::Tensor& b) {
  auto x = a.to(torch::kFloat64).contiguous();
  auto y = b.to(torch::kFloat64).contiguous();
  if (x.dim() == 3) x = x.mean(0);
  if (y.dim() == 3) y = y.mean(0);
  const int k = 11;
  const double sigma = 1.5;
  double wsum = 0.0;
  std::vector<double> g(k);
  for (int i = 0; i < k; ++i) {
    const double d = i - k / 2;
    g[i] = std::exp(-d * d / (2 * sigma * sigma));
    wsum += g[i];
  }
  for (auto& v : g) v /= wsum;
  const double c1 = 1e-4, c2 = 9e-4;
  auto px = x.accessor<double, 2>();
  auto py = y.accessor<double, 2>();
  const int64_t h = x.size(0), w = x.size(1);
  double total = 0.0;
  int64_t count = 0;
  for (int64_t r = 0; r + k <= h; ++r)
    for (int64_t c = 0; c + k <= w; ++c) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          const double wt = g[i] * g[j];
          const double u = px[r + i][c + j], v = py[r + i][c + j];
          mx += wt * u;
          my += wt * v;
          sxx += wt * u * u;
          syy += wt * v * v;
          sxy += wt * u * v;
        }
      const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
      total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return total / static_cast<double>(count);
}

}  // namespace srcd::support
