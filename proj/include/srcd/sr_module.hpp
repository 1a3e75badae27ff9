#pragma once

#include <nlohmann/json.hpp>

#include "srcd/common.hpp"

namespace srcd::sr {

struct GeneratorConfig {
  int scale = 4;
  int64_t base_channels = 64;
  int n_residual_blocks = 5;

  /// log2(scale): number of x2 sub-pixel stages.
  int upsample_stages() const;
  void validate() const;

  nlohmann::json to_json() const;
  static GeneratorConfig from_json(const nlohmann::json& j);
  bool operator==(const GeneratorConfig&) const = default;
};

/// conv3x3 -> BN -> PReLU -> conv3x3 -> BN, plus identity skip.
class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
  torch::nn::BatchNorm2d bn1_{nullptr}, bn2_{nullptr};
  torch::nn::PReLU act_{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// conv3x3 to 4x channels, depth-to-space by 2, PReLU.
class UpsampleStageImpl : public torch::nn::Module {
 public:
  explicit UpsampleStageImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv_{nullptr};
  torch::nn::PixelShuffle shuffle_{nullptr};
  torch::nn::PReLU act_{nullptr};
};
TORCH_MODULE(UpsampleStage);

/// LR [B,3,h,w] -> SR [B,3,h*N,w*N] in [0,1].
///
/// 9x9 conv + PReLU produces the shallow feature; the residual trunk's output
/// is added back onto it before the sub-pixel stages; a final 9x9 conv maps to
/// RGB and (tanh + 1) / 2 bounds the result.
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(GeneratorConfig config);
  torch::Tensor forward(const torch::Tensor& lr);
  const GeneratorConfig& config() const { return config_; }

 private:
  GeneratorConfig config_;
  torch::nn::Conv2d head_{nullptr};
  torch::nn::PReLU head_act_{nullptr};
  torch::nn::Sequential trunk_{nullptr};
  torch::nn::Sequential upsample_{nullptr};
  torch::nn::Conv2d tail_{nullptr};
};
TORCH_MODULE(Generator);

struct DiscriminatorConfig {
  int64_t base_channels = 64;
  int64_t dense_units = 1024;

  nlohmann::json to_json() const;
  static DiscriminatorConfig from_json(const nlohmann::json& j);
  bool operator==(const DiscriminatorConfig&) const = default;
};

/// Probabilities are kept inside [kProbabilityFloor, 1 - kProbabilityFloor]
/// so they remain valid inputs for the adversarial losses.
inline constexpr double kProbabilityFloor = 1e-6;

/// Eight 3x3 convs (widths 1,1,2,2,4,4,8,8 x base; strides 1,2,1,2,...),
/// LeakyReLU(0.2), BN on all but the first, global average pooling, dense to
/// `dense_units`, LeakyReLU, dense to 1, sigmoid. Returns [B].
class DiscriminatorImpl : public torch::nn::Module {
 public:
  static constexpr int64_t kMinInputSize = 32;

  explicit DiscriminatorImpl(DiscriminatorConfig config = {});
  torch::Tensor forward(const torch::Tensor& image);
  /// Pre-sigmoid score, [B].
  torch::Tensor logits(const torch::Tensor& image);
  const DiscriminatorConfig& config() const { return config_; }

 private:
  DiscriminatorConfig config_;
  torch::nn::Sequential features_{nullptr};
  torch::nn::Linear fc1_{nullptr}, fc2_{nullptr};
};
TORCH_MODULE(Discriminator);

}  // namespace srcd::sr
