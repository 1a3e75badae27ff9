#pragma once

#include <array>

#include <nlohmann/json.hpp>

#include "srcd/common.hpp"

namespace srcd::cd {

struct CdConfig {
  /// Width of the first residual stage; stages use 1x, 2x, 4x, 8x this.
  int64_t base_width = 64;
  /// Stacked attention on/off. Off: resize + concatenate without gating.
  bool use_sam = true;
  /// Channel-attention MLP reduction ratio; hidden width max(C / r, 1).
  int64_t reduction = 16;

  std::array<int64_t, 4> level_channels() const;
  int64_t fused_channels() const;
  void validate() const;

  nlohmann::json to_json() const;
  static CdConfig from_json(const nlohmann::json& j);
  bool operator==(const CdConfig&) const = default;
};

struct AttentionMaps {
  torch::Tensor channel;  // [B,C,1,1]
  torch::Tensor spatial;  // [B,1,H,W]
};

/// Convolutional block attention: channel gating by a shared two-layer 1x1
/// MLP over average- and max-pooled descriptors, then spatial gating by a 3x3
/// conv over the channel-wise mean and max of the channel-refined feature.
class CbamImpl : public torch::nn::Module {
 public:
  CbamImpl(int64_t channels, int64_t reduction);

  torch::Tensor forward(const torch::Tensor& feature);
  /// Same computation, also returning both attention maps.
  std::pair<torch::Tensor, AttentionMaps> forward_with_maps(const torch::Tensor& feature);

  torch::Tensor channel_attention(const torch::Tensor& feature);
  torch::Tensor spatial_attention(const torch::Tensor& feature);

 private:
  torch::nn::Conv2d mlp_in_{nullptr}, mlp_out_{nullptr};
  torch::nn::Conv2d spatial_{nullptr};
};
TORCH_MODULE(Cbam);

/// ResNet basic block (two 3x3 conv + BN, ReLU, projection shortcut when the
/// shape changes).
class BasicBlockImpl : public torch::nn::Module {
 public:
  BasicBlockImpl(int64_t in, int64_t out, int64_t stride);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
  torch::nn::BatchNorm2d bn1_{nullptr}, bn2_{nullptr};
  torch::nn::Sequential shortcut_{nullptr};
};
TORCH_MODULE(BasicBlock);

using Levels = std::array<torch::Tensor, 4>;

/// ResNet-18 layout with a stride-1 7x7 stem and a stride-1 last stage:
/// levels at 1/2, 1/4, 1/8, 1/8 of the input.
class FeatureExtractorImpl : public torch::nn::Module {
 public:
  explicit FeatureExtractorImpl(int64_t base_width);
  Levels forward(const torch::Tensor& image);

 private:
  torch::nn::Conv2d stem_conv_{nullptr};
  torch::nn::BatchNorm2d stem_bn_{nullptr};
  std::array<torch::nn::Sequential, 4> stages_;
};
TORCH_MODULE(FeatureExtractor);

/// Bilinear resize (half-pixel centres) of a [B,C,h,w] tensor.
torch::Tensor resize_bilinear(const torch::Tensor& x, int64_t height, int64_t width);

/// Per-level CBAM, resize to `height` x `width`, concatenate in level order,
/// fifth CBAM. Without SAM only the resize and concatenation remain.
class StackedAttentionImpl : public torch::nn::Module {
 public:
  StackedAttentionImpl(std::array<int64_t, 4> channels, bool use_sam, int64_t reduction);
  /// Concatenated (pre-fifth-CBAM) feature.
  torch::Tensor concat(const Levels& levels, int64_t height, int64_t width);
  torch::Tensor forward(const Levels& levels, int64_t height, int64_t width);
  bool use_sam() const { return use_sam_; }

 private:
  std::array<int64_t, 4> channels_;
  bool use_sam_;
  std::array<Cbam, 4> level_cbam_{Cbam{nullptr}, Cbam{nullptr}, Cbam{nullptr}, Cbam{nullptr}};
  Cbam fused_cbam_{nullptr};
};
TORCH_MODULE(StackedAttention);

struct FeaturePyramid {
  Levels levels;
  torch::Tensor fused;  // [B, 15*base, H/2, W/2]
};

/// Per-pixel Euclidean distance over channels at feature resolution, [B,1,h,w].
torch::Tensor feature_distance(const torch::Tensor& f1, const torch::Tensor& f2);

/// feature_distance followed by bilinear upsampling to (height, width).
torch::Tensor distance_map(const torch::Tensor& f1, const torch::Tensor& f2, int64_t height,
                           int64_t width);

/// 1 where dt > theta.
ChangeMask threshold_segment(const torch::Tensor& dt, double theta);

/// Siamese change network: one shared extractor + stacked attention; the
/// output is the full-resolution distance map.
class ChangeNetImpl : public torch::nn::Module {
 public:
  explicit ChangeNetImpl(CdConfig config);

  FeaturePyramid features(const torch::Tensor& image);
  torch::Tensor forward(const torch::Tensor& image_t1, const torch::Tensor& image_t2);
  const CdConfig& config() const { return config_; }

  FeatureExtractor& extractor() { return extractor_; }

 private:
  CdConfig config_;
  FeatureExtractor extractor_{nullptr};
  StackedAttention attention_{nullptr};
};
TORCH_MODULE(ChangeNet);

}  // namespace srcd::cd
