#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "srcd/common.hpp"
#include "srcd/losses.hpp"

namespace srcd::train {

enum class Mode { X1, X4, X8 };

Mode parse_mode(const std::string& text);
std::string to_string(Mode mode);
int scale_of(Mode mode);

/// The four rows of the ablation table.
enum class Variant { Base, BaseSam, BaseSrm, Full };

inline constexpr std::array<Variant, 4> kAllVariants{Variant::Base, Variant::BaseSam,
                                                     Variant::BaseSrm, Variant::Full};

/// Accepts "base|sam|srm|full" and the table names "Base", "Base+SAM",
/// "Base+SRM", "SRCDNet".
Variant parse_variant(const std::string& text);
/// Display name: Base, Base+SAM, Base+SRM, SRCDNet.
std::string display_name(Variant variant);

struct ExperimentConfig {
  Mode mode = Mode::X4;
  bool use_srm = true;
  bool use_sam = true;

  int epochs = 100;
  int batch_size = 8;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  loss::LossWeights weights;
  /// Change threshold; empty means margin / 2.
  std::optional<double> threshold;

  uint64_t seed = 0;
  std::string checkpoint_dir = "checkpoints";
  std::string data_root;

  int64_t patch_size = 256;
  bool augment = true;
  std::string degrade = "bicubic";

  int64_t cd_width = 64;
  int64_t cd_reduction = 16;
  int64_t gen_channels = 64;
  int gen_residual_blocks = 5;
  int64_t disc_channels = 64;
  int64_t disc_dense_units = 1024;
  /// "random", "identity" or a path to VGG-19 weights.
  std::string perceptual = "random";
  /// Optional extractor weights (change-network checkpoint naming).
  std::string pretrained_extractor;

  /// 0 = no cap beyond `epochs`.
  int64_t max_iterations = 0;
  int val_every = 1;
  /// Save a resumable checkpoint every k epochs (0 = only at the end).
  int checkpoint_every = 0;

  int scale() const { return scale_of(mode); }
  double effective_threshold() const { return threshold.value_or(weights.margin / 2.0); }

  /// Forces use_srm off in X1.
  void normalize();
  /// Throws ConfigError for inconsistent settings.
  void validate() const;
};

/// Sets (use_srm, use_sam) for the variant; X1 keeps use_srm off.
ExperimentConfig configure_ablation(ExperimentConfig base, Variant variant);

struct ConfigKey {
  std::string name;
  std::string help;
};

/// Every addressable key, in file order.
const std::vector<ConfigKey>& config_keys();

/// Throws ConfigError for unknown keys or unparsable values.
void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const ExperimentConfig& config, const std::string& key);

/// Parses "key = value" lines; '#' starts a comment. Missing file -> ConfigError.
ExperimentConfig load_config_file(const std::filesystem::path& path, ExperimentConfig base = {});
/// One "key = value" line per key.
std::string config_to_text(const ExperimentConfig& config);

}  // namespace srcd::train
