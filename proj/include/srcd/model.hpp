#pragma once

#include <filesystem>
#include <span>

#include "srcd/cd_module.hpp"
#include "srcd/config.hpp"
#include "srcd/data_pipeline.hpp"
#include "srcd/sr_module.hpp"

namespace srcd {

/// Stacked patch pairs: images [B,3,P,P], lr_t2 [B,3,P/N,P/N], gt [B,1,P,P].
struct Batch {
  torch::Tensor hr_t1;
  torch::Tensor hr_t2;
  torch::Tensor lr_t2;
  torch::Tensor bicubic_t2;
  torch::Tensor gt;

  int64_t size() const { return hr_t1.size(0); }
};

Batch make_batch(std::span<const data::PatchPair> pairs);

/// The three networks of one experiment. Generator and discriminator exist
/// only when the SR module is enabled.
struct SrcdNet {
  int scale = 1;
  bool use_srm = false;
  sr::Generator generator{nullptr};
  sr::Discriminator discriminator{nullptr};
  cd::ChangeNet change_net{nullptr};

  /// Seeds torch with `config.seed` and builds G, D (if SRM) and the change
  /// network in that order.
  static SrcdNet create(const train::ExperimentConfig& config);

  void set_training(bool training);

  /// T2 input of the change network: G(LR) with SRM, the bicubic image in
  /// X4/X8 without it, the HR image in X1.
  torch::Tensor t2_input(const Batch& batch);
  /// Full-resolution distance map [B,1,P,P].
  torch::Tensor distance(const Batch& batch);

  /// Writes generator.ckpt, discriminator.ckpt and change_net.ckpt.
  void save(const std::filesystem::path& dir) const;
  /// Loads into a network built from `config`; architecture differences raise
  /// CheckpointError.
  static SrcdNet load(const std::filesystem::path& dir, const train::ExperimentConfig& config);
};

sr::GeneratorConfig generator_config(const train::ExperimentConfig& config);
sr::DiscriminatorConfig discriminator_config(const train::ExperimentConfig& config);
cd::CdConfig cd_config(const train::ExperimentConfig& config);

/// Loads extractor weights (names as in FeatureExtractor) from a checkpoint.
void load_pretrained_extractor(cd::ChangeNet& net, const std::filesystem::path& path);

}  // namespace srcd
