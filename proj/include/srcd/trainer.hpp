#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "srcd/config.hpp"
#include "srcd/losses.hpp"
#include "srcd/model.hpp"

namespace srcd::train {

struct TrainState {
  ExperimentConfig config;
  SrcdNet net;
  std::unique_ptr<torch::optim::Adam> opt_generator;
  std::unique_ptr<torch::optim::Adam> opt_discriminator;
  std::unique_ptr<torch::optim::Adam> opt_change;
  std::unique_ptr<loss::PerceptualExtractor> perceptual;

  int64_t iteration = 0;
  int64_t epoch = 0;
  std::mt19937_64 rng;
  double best_val_f1 = -1.0;
  int64_t best_epoch = -1;
};

/// Fresh networks and optimizers for `config` (normalized and validated).
TrainState init_state(const ExperimentConfig& config);

/// Sub-steps of one iteration, reported in the order they complete.
enum class Phase { GeneratorForward, Discriminator, ChangeNetwork, Generator };
const char* to_string(Phase phase);

using PhaseObserver = std::function<void(Phase)>;

/// One iteration. With the SR module: SR forward, discriminator update on
/// Loss_D, change-network update on Loss_CD with SR detached, then the
/// generator update on Loss_G with discriminator and change network frozen
/// (eval mode, no parameter gradients). Without it: the change-network update
/// only. NaN/Inf losses or Loss_G > 1e4 raise TrainingError before any
/// parameter of the offending sub-step moves.
loss::LossBundle train_step(const Batch& batch, TrainState& state, const PhaseObserver& observer = {});

inline constexpr double kDivergenceLimit = 1e4;

struct TrainingData {
  std::vector<data::PatchPair> train;
  std::vector<data::PatchPair> val;
};

struct TrainResult {
  /// Iteration and epoch records, in order.
  std::vector<nlohmann::ordered_json> log;
  double best_val_f1 = -1.0;
  int64_t best_epoch = -1;
};

struct TrainHooks {
  PhaseObserver phase_observer;
  /// Called after each epoch's validation; return false to stop early.
  std::function<bool(const TrainState&, int64_t epoch, double val_f1)> after_epoch;
};

/// Runs epochs `state.epoch .. config.epochs - 1` over `data.train` (shuffled
/// per epoch from `state.rng`), validating on `data.val` every `val_every`
/// epochs and keeping the best-F1 networks under `<checkpoint_dir>/best`.
TrainResult train(TrainState& state, const TrainingData& data, const TrainHooks& hooks = {});

struct TrainOutcome {
  TrainState state;
  TrainResult result;
  data::DatasetSplit split;
};

/// Loads `config.data_root`, prepares the split and trains from scratch.
TrainOutcome train(const ExperimentConfig& config);

/// DatasetOptions implied by the config.
data::DatasetOptions dataset_options(const ExperimentConfig& config);

/// Networks, optimizer moments, counters and RNG state.
void save_state(TrainState& state, const std::filesystem::path& dir);
TrainState load_state(const std::filesystem::path& dir);

/// JSON lines.
void write_log(const std::filesystem::path& path, const std::vector<nlohmann::ordered_json>& log);

}  // namespace srcd::train
