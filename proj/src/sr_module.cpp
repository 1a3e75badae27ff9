#include "srcd/sr_module.hpp"

#include <bit>

namespace srcd::sr {
namespace nn = torch::nn;

namespace {

nn::Conv2d conv(int64_t in, int64_t out, int64_t kernel, int64_t stride = 1, bool bias = true) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2).bias(bias));
}

nn::PReLU prelu(int64_t channels) {
  return nn::PReLU(nn::PReLUOptions().num_parameters(channels).init(0.25));
}

}  // namespace

int GeneratorConfig::upsample_stages() const {
  return std::countr_zero(static_cast<unsigned>(scale));
}

void GeneratorConfig::validate() const {
  require(scale == 4 || scale == 8, "generator scale must be 4 or 8, got " + std::to_string(scale));
  require(base_channels >= 1, "generator base_channels must be >= 1");
  require(n_residual_blocks >= 1, "generator needs at least one residual block");
}

nlohmann::json GeneratorConfig::to_json() const {
  return {{"scale", scale}, {"base_channels", base_channels}, {"n_residual_blocks", n_residual_blocks}};
}

GeneratorConfig GeneratorConfig::from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  c.scale = j.at("scale").get<int>();
  c.base_channels = j.at("base_channels").get<int64_t>();
  c.n_residual_blocks = j.at("n_residual_blocks").get<int>();
  return c;
}

ResidualBlockImpl::ResidualBlockImpl(int64_t channels)
    : conv1_(register_module("conv1", conv(channels, channels, 3))),
      conv2_(register_module("conv2", conv(channels, channels, 3))),
      bn1_(register_module("bn1", nn::BatchNorm2d(channels))),
      bn2_(register_module("bn2", nn::BatchNorm2d(channels))),
      act_(register_module("act", prelu(channels))) {}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  auto y = act_(bn1_(conv1_(x)));
  return x + bn2_(conv2_(y));
}

UpsampleStageImpl::UpsampleStageImpl(int64_t channels)
    : conv_(register_module("conv", conv(channels, channels * 4, 3))),
      shuffle_(register_module("shuffle", nn::PixelShuffle(nn::PixelShuffleOptions(2)))),
      act_(register_module("act", prelu(channels))) {}

torch::Tensor UpsampleStageImpl::forward(const torch::Tensor& x) {
  return act_(shuffle_(conv_(x)));
}

GeneratorImpl::GeneratorImpl(GeneratorConfig config) : config_(config) {
  config_.validate();
  const int64_t c = config_.base_channels;
  head_ = register_module("head", conv(3, c, 9));
  head_act_ = register_module("head_act", prelu(c));
  trunk_ = register_module("trunk", nn::Sequential());
  for (int i = 0; i < config_.n_residual_blocks; ++i) trunk_->push_back(ResidualBlock(c));
  upsample_ = register_module("upsample", nn::Sequential());
  for (int i = 0; i < config_.upsample_stages(); ++i) upsample_->push_back(UpsampleStage(c));
  tail_ = register_module("tail", conv(c, 3, 9));
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& lr) {
  require(lr.dim() == 4 && lr.size(1) == 3, "generator input must be [B,3,h,w], got " + shape_string(lr));
  require(lr.size(2) >= 8 && lr.size(3) >= 8, "generator input must be at least 8x8, got " + shape_string(lr));
  auto shallow = head_act_(head_(lr));
  auto deep = trunk_->forward(shallow);
  auto up = upsample_->forward(shallow + deep);
  return (torch::tanh(tail_(up)) + 1.0) * 0.5;
}

nlohmann::json DiscriminatorConfig::to_json() const {
  return {{"base_channels", base_channels}, {"dense_units", dense_units}};
}

DiscriminatorConfig DiscriminatorConfig::from_json(const nlohmann::json& j) {
  DiscriminatorConfig c;
  c.base_channels = j.at("base_channels").get<int64_t>();
  c.dense_units = j.at("dense_units").get<int64_t>();
  return c;
}

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorConfig config) : config_(config) {
  require(config_.base_channels >= 1 && config_.dense_units >= 1, "invalid discriminator widths");
  const int64_t b = config_.base_channels;
  const std::array<int64_t, 8> widths{b, b, 2 * b, 2 * b, 4 * b, 4 * b, 8 * b, 8 * b};
  features_ = register_module("features", nn::Sequential());
  int64_t in = 3;
  for (size_t i = 0; i < widths.size(); ++i) {
    const int64_t stride = (i % 2 == 1) ? 2 : 1;
    features_->push_back(conv(in, widths[i], 3, stride));
    if (i > 0) features_->push_back(nn::BatchNorm2d(widths[i]));
    features_->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
    in = widths[i];
  }
  fc1_ = register_module("fc1", nn::Linear(in, config_.dense_units));
  fc2_ = register_module("fc2", nn::Linear(config_.dense_units, 1));
}

torch::Tensor DiscriminatorImpl::logits(const torch::Tensor& image) {
  require(image.dim() == 4 && image.size(1) == 3,
          "discriminator input must be [B,3,H,W], got " + shape_string(image));
  require(image.size(2) >= kMinInputSize && image.size(3) >= kMinInputSize,
          "discriminator input must be at least 32x32, got " + shape_string(image));
  auto f = features_->forward(image).mean({2, 3});
  auto h = torch::leaky_relu(fc1_(f), 0.2);
  return fc2_(h).squeeze(1);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& image) {
  return torch::sigmoid(logits(image)).clamp(kProbabilityFloor, 1.0 - kProbabilityFloor);
}

}  // namespace srcd::sr
