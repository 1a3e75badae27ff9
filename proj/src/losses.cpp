#include "srcd/losses.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>

#include "srcd/checkpoint.hpp"

namespace srcd::loss {
namespace F = torch::nn::functional;

namespace {

void require_probabilities(const torch::Tensor& p, const char* what) {
  require(p.numel() > 0, std::string(what) + " is empty");
  const auto d = p.detach();
  require((d > 0.0).all().item<bool>() && (d < 1.0).all().item<bool>(),
          std::string(what) + " must lie strictly inside (0,1)");
}

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  require(a.sizes().equals(b.sizes()),
          std::string(what) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

void require_finite(const torch::Tensor& t, const char* term) {
  if (!t.defined()) throw TrainingError(std::string("loss term ") + term + " is missing");
  if (!torch::isfinite(t.detach()).all().item<bool>()) {
    throw TrainingError(std::string("loss term ") + term + " is not finite");
  }
}

torch::Tensor conv_relu(const torch::Tensor& x, const std::pair<torch::Tensor, torch::Tensor>& layer,
                        int64_t stride = 1) {
  return torch::relu(F::conv2d(x, layer.first, F::Conv2dFuncOptions().bias(layer.second).stride(stride).padding(1)));
}

}  // namespace

void LossWeights::validate() const {
  require(alpha >= 0.0 && beta >= 0.0 && lambda_cd >= 0.0, "loss weights must be >= 0");
  require(margin > 0.0, "contrastive margin must be > 0");
}

torch::Tensor discriminator_loss(const torch::Tensor& d_hr, const torch::Tensor& d_sr) {
  require_probabilities(d_hr, "D(HR)");
  require_probabilities(d_sr, "D(SR)");
  return 1.0 - d_hr.mean() + d_sr.mean();
}

torch::Tensor adversarial_loss(const torch::Tensor& d_sr) {
  require_probabilities(d_sr, "D(SR)");
  return 1.0 - d_sr.mean();
}

torch::Tensor contrastive_loss(const torch::Tensor& dt, const torch::Tensor& gt, double margin) {
  require(margin > 0.0, "contrastive margin must be > 0");
  require_same_shape(dt, gt, "contrastive_loss");
  const auto g = gt.detach();
  require(((g == 0.0) | (g == 1.0)).all().item<bool>(), "contrastive_loss: gt must be binary");
  auto unchanged = (1.0 - gt) * dt.pow(2);
  auto changed = gt * torch::clamp_min(margin - dt, 0.0).pow(2);
  return 0.5 * (unchanged + changed).mean();
}

torch::Tensor image_mse_loss(const torch::Tensor& sr, const torch::Tensor& hr) {
  require_same_shape(sr, hr, "image_mse_loss");
  return (hr - sr).pow(2).mean();
}

RandomConvExtractor::RandomConvExtractor(uint64_t seed) {
  auto gen = at::detail::createCPUGenerator(seed);
  const std::array<int64_t, 5> widths{3, 16, 16, 32, 32};
  for (size_t i = 0; i + 1 < widths.size(); ++i) {
    const double scale = std::sqrt(2.0 / static_cast<double>(widths[i] * 9));
    auto w = torch::randn({widths[i + 1], widths[i], 3, 3}, gen, torch::kFloat32) * scale;
    auto b = torch::randn({widths[i + 1]}, gen, torch::kFloat32) * 0.01;
    layers_.emplace_back(w, b);
  }
}

torch::Tensor RandomConvExtractor::features(const torch::Tensor& image) {
  auto x = image;
  for (size_t i = 0; i < layers_.size(); ++i) x = conv_relu(x, layers_[i], kStrides[i]);
  return x;
}

void RandomConvExtractor::to(torch::ScalarType dtype) {
  for (auto& [w, b] : layers_) {
    w = w.to(dtype);
    b = b.to(dtype);
  }
}

const std::vector<int>& Vgg19Extractor::conv_indices() {
  static const std::vector<int> idx{0, 2, 5, 7, 10, 12, 14, 16, 19, 21, 23, 25, 28, 30, 32, 34};
  return idx;
}

const std::vector<int64_t>& Vgg19Extractor::conv_widths() {
  static const std::vector<int64_t> w{64, 64, 128, 128, 256, 256, 256, 256,
                                      512, 512, 512, 512, 512, 512, 512, 512};
  return w;
}

Vgg19Extractor::Vgg19Extractor(const std::filesystem::path& weights) {
  const auto ckpt = io::load_checkpoint(weights);
  int64_t in = 3;
  for (size_t i = 0; i < conv_indices().size(); ++i) {
    const auto prefix = "features." + std::to_string(conv_indices()[i]);
    auto w = ckpt.at(prefix + ".weight").to(torch::kFloat32);
    auto b = ckpt.at(prefix + ".bias").to(torch::kFloat32);
    if (!w.sizes().equals({conv_widths()[i], in, 3, 3}) || b.numel() != conv_widths()[i]) {
      throw CheckpointError("VGG-19 weight " + prefix + " has shape " + shape_string(w));
    }
    layers_.emplace_back(w, b);
    in = conv_widths()[i];
  }
}

torch::Tensor Vgg19Extractor::features(const torch::Tensor& image) {
  const auto opts = image.options();
  auto mean = torch::tensor({0.485, 0.456, 0.406}, opts).view({1, 3, 1, 1});
  auto stdev = torch::tensor({0.229, 0.224, 0.225}, opts).view({1, 3, 1, 1});
  auto x = (image - mean) / stdev;
  // Max-pool after conv layers 2, 4, 8 and 12 (1-based).
  for (size_t i = 0; i < layers_.size(); ++i) {
    x = conv_relu(x, layers_[i]);
    if (i == 1 || i == 3 || i == 7 || i == 11) x = F::max_pool2d(x, F::MaxPool2dFuncOptions(2));
  }
  return x;
}

void Vgg19Extractor::to(torch::ScalarType dtype) {
  for (auto& [w, b] : layers_) {
    w = w.to(dtype);
    b = b.to(dtype);
  }
}

std::unique_ptr<PerceptualExtractor> make_extractor(const std::string& source, uint64_t seed) {
  if (source.empty() || source == "random") return std::make_unique<RandomConvExtractor>(seed);
  if (source == "identity") return std::make_unique<IdentityExtractor>();
  return std::make_unique<Vgg19Extractor>(source);
}

torch::Tensor content_loss(const torch::Tensor& sr, const torch::Tensor& hr,
                           PerceptualExtractor& extractor) {
  require_same_shape(sr, hr, "content_loss");
  torch::Tensor target;
  {
    torch::NoGradGuard no_grad;
    target = extractor.features(hr);
  }
  return (extractor.features(sr) - target).pow(2).mean();
}

torch::Tensor generator_loss(const GeneratorLossParts& parts, const LossWeights& weights) {
  weights.validate();
  require_finite(parts.image, "l_MSE");
  require_finite(parts.content, "l_MSE_VGG");
  require_finite(parts.adversarial, "l_D");
  require_finite(parts.change, "Loss_CD");
  return parts.image + weights.alpha * parts.content + weights.beta * parts.adversarial +
         weights.lambda_cd * parts.change;
}

double generator_loss(double image, double content, double adversarial, double change,
                      const LossWeights& weights) {
  weights.validate();
  const std::array<std::pair<double, const char*>, 4> terms{
      {{image, "l_MSE"}, {content, "l_MSE_VGG"}, {adversarial, "l_D"}, {change, "Loss_CD"}}};
  for (const auto& [value, name] : terms) {
    if (!std::isfinite(value)) throw TrainingError(std::string("loss term ") + name + " is not finite");
  }
  return image + weights.alpha * content + weights.beta * adversarial + weights.lambda_cd * change;
}

nlohmann::ordered_json LossBundle::to_json() const {
  nlohmann::ordered_json j;
  auto put = [&j](const char* key, const std::optional<double>& v) {
    j[key] = v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  put("loss_D", loss_D);
  put("loss_CD", loss_CD);
  put("l_MSE", l_MSE);
  put("l_MSE_VGG", l_MSE_VGG);
  put("l_D", l_D);
  put("loss_G", loss_G);
  return j;
}

}  // namespace srcd::loss
