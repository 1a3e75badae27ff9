#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "srcd/common.hpp"

namespace srcd::loss {

struct LossWeights {
  double alpha = 0.006;      // content loss
  double beta = 0.001;       // adversarial loss
  double lambda_cd = 0.001;  // change loss
  double margin = 2.0;       // contrastive margin m

  void validate() const;
};

/// 1 - D(HR) + D(SR), batch-averaged. Probabilities must lie in (0,1).
torch::Tensor discriminator_loss(const torch::Tensor& d_hr, const torch::Tensor& d_sr);

/// 1 - D(SR), batch-averaged.
torch::Tensor adversarial_loss(const torch::Tensor& d_sr);

/// Mean over batch and pixels of 0.5 * [(1 - gt) dt^2 + gt * max(m - dt, 0)^2].
/// `gt` must be binary and match `dt` in shape.
torch::Tensor contrastive_loss(const torch::Tensor& dt, const torch::Tensor& gt, double margin);

/// Mean squared error over all elements.
torch::Tensor image_mse_loss(const torch::Tensor& sr, const torch::Tensor& hr);

/// Fixed (never trained) feature map used by the content loss.
class PerceptualExtractor {
 public:
  virtual ~PerceptualExtractor() = default;
  virtual torch::Tensor features(const torch::Tensor& image) = 0;
  virtual std::string name() const = 0;
  /// Moves any weights to `dtype`.
  virtual void to(torch::ScalarType dtype) = 0;
};

class IdentityExtractor final : public PerceptualExtractor {
 public:
  torch::Tensor features(const torch::Tensor& image) override { return image; }
  std::string name() const override { return "identity"; }
  void to(torch::ScalarType) override {}
};

/// Four seeded, untrained 3x3 conv + ReLU layers (3 -> 16 -> 16 -> 32 -> 32,
/// the third with stride 2). Default when no pretrained weights are given.
class RandomConvExtractor final : public PerceptualExtractor {
 public:
  explicit RandomConvExtractor(uint64_t seed = 0x5eed);
  torch::Tensor features(const torch::Tensor& image) override;
  std::string name() const override { return "random_conv"; }
  void to(torch::ScalarType dtype) override;

  /// Weights and biases, in layer order.
  const std::vector<std::pair<torch::Tensor, torch::Tensor>>& layers() const { return layers_; }
  static constexpr std::array<int64_t, 4> kStrides{1, 1, 2, 1};

 private:
  std::vector<std::pair<torch::Tensor, torch::Tensor>> layers_;
};

/// VGG-19 convolutional trunk up to the ReLU after conv5_4, with ImageNet
/// input normalisation. Weights come from a checkpoint whose tensors are named
/// "features.<index>.weight" / "features.<index>.bias" following the usual
/// torchvision indexing.
class Vgg19Extractor final : public PerceptualExtractor {
 public:
  explicit Vgg19Extractor(const std::filesystem::path& weights);
  torch::Tensor features(const torch::Tensor& image) override;
  std::string name() const override { return "vgg19"; }
  void to(torch::ScalarType dtype) override;

  /// torchvision feature indices of the 16 conv layers.
  static const std::vector<int>& conv_indices();
  /// Channel widths of the 16 conv layers.
  static const std::vector<int64_t>& conv_widths();

 private:
  std::vector<std::pair<torch::Tensor, torch::Tensor>> layers_;
};

/// "random" (default), "identity", or a path to VGG-19 weights.
std::unique_ptr<PerceptualExtractor> make_extractor(const std::string& source, uint64_t seed = 0x5eed);

/// MSE between extractor features of `sr` and `hr`; `hr` features carry no
/// gradient.
torch::Tensor content_loss(const torch::Tensor& sr, const torch::Tensor& hr,
                           PerceptualExtractor& extractor);

struct GeneratorLossParts {
  torch::Tensor image;        // l_MSE
  torch::Tensor content;      // l_MSE^VGG
  torch::Tensor adversarial;  // l_D
  torch::Tensor change;       // Loss_CD
};

/// l_MSE + alpha * l_MSE^VGG + beta * l_D + lambda * Loss_CD. Throws
/// TrainingError naming the first non-finite part.
torch::Tensor generator_loss(const GeneratorLossParts& parts, const LossWeights& weights);
double generator_loss(double image, double content, double adversarial, double change,
                      const LossWeights& weights);

/// Scalars of one training iteration; terms that did not run are empty.
struct LossBundle {
  std::optional<double> loss_D;
  std::optional<double> loss_CD;
  std::optional<double> l_MSE;
  std::optional<double> l_MSE_VGG;
  std::optional<double> l_D;
  std::optional<double> loss_G;

  nlohmann::ordered_json to_json() const;
};

}  // namespace srcd::loss
