#include "srcd/cd_module.hpp"

namespace srcd::cd {
namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

nn::Conv2d conv(int64_t in, int64_t out, int64_t kernel, int64_t stride = 1, bool bias = false) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2).bias(bias));
}

nn::Sequential make_stage(int64_t in, int64_t out, int64_t stride) {
  nn::Sequential stage;
  stage->push_back(BasicBlock(in, out, stride));
  stage->push_back(BasicBlock(out, out, 1));
  return stage;
}

}  // namespace

std::array<int64_t, 4> CdConfig::level_channels() const {
  return {base_width, 2 * base_width, 4 * base_width, 8 * base_width};
}

int64_t CdConfig::fused_channels() const { return 15 * base_width; }

void CdConfig::validate() const {
  require(base_width >= 1, "change network base_width must be >= 1");
  require(reduction >= 1, "CBAM reduction ratio must be >= 1");
}

nlohmann::json CdConfig::to_json() const {
  return {{"base_width", base_width}, {"use_sam", use_sam}, {"reduction", reduction}};
}

CdConfig CdConfig::from_json(const nlohmann::json& j) {
  CdConfig c;
  c.base_width = j.at("base_width").get<int64_t>();
  c.use_sam = j.at("use_sam").get<bool>();
  c.reduction = j.at("reduction").get<int64_t>();
  return c;
}

CbamImpl::CbamImpl(int64_t channels, int64_t reduction) {
  require(channels >= 1, "CBAM needs at least one channel");
  require(reduction >= 1, "CBAM reduction ratio must be >= 1");
  const int64_t hidden = std::max<int64_t>(channels / reduction, 1);
  mlp_in_ = register_module("mlp_in", conv(channels, hidden, 1));
  mlp_out_ = register_module("mlp_out", conv(hidden, channels, 1));
  spatial_ = register_module("spatial", conv(2, 1, 3));
}

torch::Tensor CbamImpl::channel_attention(const torch::Tensor& feature) {
  auto mlp = [this](const torch::Tensor& v) { return mlp_out_(torch::relu(mlp_in_(v))); };
  auto avg = feature.mean({2, 3}, /*keepdim=*/true);
  auto max = feature.amax({2, 3}, /*keepdim=*/true);
  return torch::sigmoid(mlp(avg) + mlp(max));
}

torch::Tensor CbamImpl::spatial_attention(const torch::Tensor& feature) {
  auto avg = feature.mean(1, /*keepdim=*/true);
  auto max = feature.amax(1, /*keepdim=*/true);
  return torch::sigmoid(spatial_(torch::cat({avg, max}, 1)));
}

std::pair<torch::Tensor, AttentionMaps> CbamImpl::forward_with_maps(const torch::Tensor& feature) {
  require(feature.dim() == 4, "CBAM input must be [B,C,H,W], got " + shape_string(feature));
  auto mc = channel_attention(feature);
  auto refined = mc * feature;
  auto ms = spatial_attention(refined);
  return {ms * refined, {mc, ms}};
}

torch::Tensor CbamImpl::forward(const torch::Tensor& feature) {
  return forward_with_maps(feature).first;
}

BasicBlockImpl::BasicBlockImpl(int64_t in, int64_t out, int64_t stride)
    : conv1_(register_module("conv1", conv(in, out, 3, stride))),
      conv2_(register_module("conv2", conv(out, out, 3))),
      bn1_(register_module("bn1", nn::BatchNorm2d(out))),
      bn2_(register_module("bn2", nn::BatchNorm2d(out))) {
  if (stride != 1 || in != out) {
    shortcut_ = register_module(
        "shortcut", nn::Sequential(conv(in, out, 1, stride), nn::BatchNorm2d(out)));
  }
}

torch::Tensor BasicBlockImpl::forward(const torch::Tensor& x) {
  auto y = bn2_(conv2_(torch::relu(bn1_(conv1_(x)))));
  auto skip = shortcut_ ? shortcut_->forward(x) : x;
  return torch::relu(y + skip);
}

FeatureExtractorImpl::FeatureExtractorImpl(int64_t base_width) {
  require(base_width >= 1, "extractor base_width must be >= 1");
  stem_conv_ = register_module("stem_conv", conv(3, base_width, 7));
  stem_bn_ = register_module("stem_bn", nn::BatchNorm2d(base_width));
  const std::array<int64_t, 4> strides{1, 2, 2, 1};
  int64_t in = base_width;
  for (size_t i = 0; i < 4; ++i) {
    const int64_t out = base_width << i;
    stages_[i] = register_module("layer" + std::to_string(i + 1), make_stage(in, out, strides[i]));
    in = out;
  }
}

Levels FeatureExtractorImpl::forward(const torch::Tensor& image) {
  require(image.dim() == 4 && image.size(1) == 3,
          "extractor input must be [B,3,H,W], got " + shape_string(image));
  require(image.size(2) % 8 == 0 && image.size(3) % 8 == 0,
          "extractor input size must be divisible by 8, got " + shape_string(image));
  auto x = torch::relu(stem_bn_(stem_conv_(image)));
  x = F::max_pool2d(x, F::MaxPool2dFuncOptions(3).stride(2).padding(1));
  Levels levels;
  for (size_t i = 0; i < 4; ++i) {
    x = stages_[i]->forward(x);
    levels[i] = x;
  }
  return levels;
}

torch::Tensor resize_bilinear(const torch::Tensor& x, int64_t height, int64_t width) {
  if (x.size(2) == height && x.size(3) == width) return x;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{height, width})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

StackedAttentionImpl::StackedAttentionImpl(std::array<int64_t, 4> channels, bool use_sam,
                                           int64_t reduction)
    : channels_(channels), use_sam_(use_sam) {
  if (!use_sam_) return;
  int64_t total = 0;
  for (size_t i = 0; i < 4; ++i) {
    level_cbam_[i] = register_module("cbam" + std::to_string(i + 1), Cbam(channels[i], reduction));
    total += channels[i];
  }
  fused_cbam_ = register_module("cbam_fused", Cbam(total, reduction));
}

torch::Tensor StackedAttentionImpl::concat(const Levels& levels, int64_t height, int64_t width) {
  std::vector<torch::Tensor> parts;
  for (size_t i = 0; i < 4; ++i) {
    const auto& level = levels[i];
    require(level.defined() && level.dim() == 4 && level.size(1) == channels_[i],
            "pyramid level " + std::to_string(i + 1) + " has unexpected shape");
    require(level.size(0) == levels[0].size(0), "pyramid levels disagree on batch size");
    auto refined = use_sam_ ? level_cbam_[i]->forward(level) : level;
    parts.push_back(resize_bilinear(refined, height, width));
  }
  return torch::cat(parts, 1);
}

torch::Tensor StackedAttentionImpl::forward(const Levels& levels, int64_t height, int64_t width) {
  auto fused = concat(levels, height, width);
  return use_sam_ ? fused_cbam_->forward(fused) : fused;
}

torch::Tensor feature_distance(const torch::Tensor& f1, const torch::Tensor& f2) {
  require(f1.sizes().equals(f2.sizes()),
          "feature shapes differ: " + shape_string(f1) + " vs " + shape_string(f2));
  require(f1.dim() == 4, "features must be [B,C,h,w]");
  // vector_norm's backward is zero (not NaN) where the difference vanishes.
  return torch::linalg_vector_norm(f1 - f2, 2, {1}, /*keepdim=*/true);
}

torch::Tensor distance_map(const torch::Tensor& f1, const torch::Tensor& f2, int64_t height,
                           int64_t width) {
  return resize_bilinear(feature_distance(f1, f2), height, width);
}

ChangeMask threshold_segment(const torch::Tensor& dt, double theta) {
  require(theta >= 0.0, "threshold must be >= 0");
  return (dt > theta).to(torch::kFloat32);
}

ChangeNetImpl::ChangeNetImpl(CdConfig config) : config_(config) {
  config_.validate();
  extractor_ = register_module("extractor", FeatureExtractor(config_.base_width));
  attention_ = register_module(
      "attention", StackedAttention(config_.level_channels(), config_.use_sam, config_.reduction));
}

FeaturePyramid ChangeNetImpl::features(const torch::Tensor& image) {
  FeaturePyramid pyramid;
  pyramid.levels = extractor_->forward(image);
  pyramid.fused = attention_->forward(pyramid.levels, image.size(2) / 2, image.size(3) / 2);
  return pyramid;
}

torch::Tensor ChangeNetImpl::forward(const torch::Tensor& image_t1, const torch::Tensor& image_t2) {
  require(image_t1.sizes().equals(image_t2.sizes()),
          "bi-temporal inputs differ in shape: " + shape_string(image_t1) + " vs " +
              shape_string(image_t2));
  auto f1 = features(image_t1).fused;
  auto f2 = features(image_t2).fused;
  return distance_map(f1, f2, image_t1.size(2), image_t1.size(3));
}

}  // namespace srcd::cd
