#include "srcd/trainer.hpp"

#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "srcd/checkpoint.hpp"
#include "srcd/evaluate_split.hpp"

namespace srcd::train {
namespace {

// Parameters of `module` stop requiring gradients and the module runs in eval
// mode for the guard's lifetime.
class FreezeGuard {
 public:
  explicit FreezeGuard(torch::nn::Module& module) : module_(module), was_training_(module.is_training()) {
    for (auto& p : module_.parameters()) {
      flags_.push_back(p.requires_grad());
      p.set_requires_grad(false);
    }
    module_.eval();
  }
  ~FreezeGuard() {
    size_t i = 0;
    for (auto& p : module_.parameters()) p.set_requires_grad(flags_[i++]);
    module_.train(was_training_);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  torch::nn::Module& module_;
  bool was_training_;
  std::vector<bool> flags_;
};

double checked(const torch::Tensor& loss, const char* name) {
  const double v = loss.item<double>();
  if (!std::isfinite(v)) {
    throw TrainingError(std::string(name) + " is not finite (" + std::to_string(v) + ")");
  }
  return v;
}

std::unique_ptr<torch::optim::Adam> make_adam(torch::nn::Module& module, const ExperimentConfig& cfg) {
  return std::make_unique<torch::optim::Adam>(
      module.parameters(),
      torch::optim::AdamOptions(cfg.learning_rate).betas({cfg.adam_beta1, cfg.adam_beta2}).weight_decay(0.0));
}

void make_optimizers(TrainState& state) {
  auto& net = state.net;
  if (net.use_srm) {
    state.opt_generator = make_adam(*net.generator, state.config);
    state.opt_discriminator = make_adam(*net.discriminator, state.config);
  }
  state.opt_change = make_adam(*net.change_net, state.config);
}

io::Checkpoint optimizer_checkpoint(torch::optim::Adam& opt, torch::nn::Module& module, const std::string& kind) {
  io::Checkpoint ckpt;
  ckpt.kind = kind;
  auto& states = opt.state();
  for (const auto& item : module.named_parameters(true)) {
    const auto it = states.find(item.value().unsafeGetTensorImpl());
    if (it == states.end()) continue;
    const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
    ckpt.tensors.push_back({item.key() + "/step", torch::tensor(s.step(), torch::kInt64)});
    ckpt.tensors.push_back({item.key() + "/exp_avg", s.exp_avg()});
    ckpt.tensors.push_back({item.key() + "/exp_avg_sq", s.exp_avg_sq()});
  }
  return ckpt;
}

void restore_optimizer(torch::optim::Adam& opt, torch::nn::Module& module, const io::Checkpoint& ckpt) {
  auto& states = opt.state();
  for (const auto& item : module.named_parameters(true)) {
    const auto& name = item.key();
    if (!ckpt.contains(name + "/step")) continue;
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->step(ckpt.at(name + "/step").item<int64_t>());
    s->exp_avg(ckpt.at(name + "/exp_avg").clone());
    s->exp_avg_sq(ckpt.at(name + "/exp_avg_sq").clone());
    if (!s->exp_avg().sizes().equals(item.value().sizes())) {
      throw CheckpointError("optimizer moment shape mismatch for " + name);
    }
    states[item.value().unsafeGetTensorImpl()] = std::move(s);
  }
}

nlohmann::ordered_json iteration_record(int64_t iteration, int64_t epoch, const loss::LossBundle& bundle) {
  nlohmann::ordered_json j;
  j["iteration"] = iteration;
  j["epoch"] = epoch;
  const auto losses = bundle.to_json();
  for (const auto& [k, v] : losses.items()) j[k] = v;
  j["val_F1"] = nullptr;
  return j;
}

nlohmann::ordered_json epoch_record(int64_t iteration, int64_t epoch, double val_f1) {
  auto j = iteration_record(iteration, epoch, {});
  j["val_F1"] = val_f1;
  return j;
}

void ensure_writable(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const auto probe = dir / ".write_probe";
  std::ofstream out(probe);
  if (ec || !out) throw Error("checkpoint directory is not writable: " + dir.string());
  out.close();
  std::filesystem::remove(probe, ec);
}

}  // namespace

const char* to_string(Phase phase) {
  switch (phase) {
    case Phase::GeneratorForward: return "G-forward";
    case Phase::Discriminator: return "D";
    case Phase::ChangeNetwork: return "CD";
    case Phase::Generator: return "G";
  }
  return "?";
}

TrainState init_state(const ExperimentConfig& config) {
  TrainState state;
  state.config = config;
  state.config.normalize();
  state.config.validate();
  state.net = SrcdNet::create(state.config);
  make_optimizers(state);
  if (state.net.use_srm) state.perceptual = loss::make_extractor(state.config.perceptual);
  state.rng.seed(state.config.seed);
  return state;
}

loss::LossBundle train_step(const Batch& batch, TrainState& state, const PhaseObserver& observer) {
  auto& net = state.net;
  const auto& cfg = state.config;
  const double margin = cfg.weights.margin;
  auto notify = [&observer](Phase p) {
    if (observer) observer(p);
  };
  require(batch.hr_t1.size(2) == batch.gt.size(2) && batch.hr_t1.size(3) == batch.gt.size(3),
          "batch images and masks differ in size");
  require(batch.lr_t2.size(2) * net.scale == batch.hr_t2.size(2), "batch LR size does not match the scale");

  net.set_training(true);
  loss::LossBundle bundle;

  if (!net.use_srm) {
    state.opt_change->zero_grad();
    auto dt = net.change_net->forward(batch.hr_t1, net.t2_input(batch));
    auto loss_cd = loss::contrastive_loss(dt, batch.gt, margin);
    bundle.loss_CD = checked(loss_cd, "Loss_CD");
    loss_cd.backward();
    state.opt_change->step();
    notify(Phase::ChangeNetwork);
    ++state.iteration;
    return bundle;
  }

  auto sr = net.generator->forward(batch.lr_t2);
  notify(Phase::GeneratorForward);
  const auto sr_fixed = sr.detach();

  state.opt_discriminator->zero_grad();
  auto loss_d = loss::discriminator_loss(net.discriminator->forward(batch.hr_t2),
                                         net.discriminator->forward(sr_fixed));
  bundle.loss_D = checked(loss_d, "Loss_D");
  loss_d.backward();
  state.opt_discriminator->step();
  notify(Phase::Discriminator);

  state.opt_change->zero_grad();
  auto loss_cd = loss::contrastive_loss(net.change_net->forward(batch.hr_t1, sr_fixed), batch.gt, margin);
  bundle.loss_CD = checked(loss_cd, "Loss_CD");
  loss_cd.backward();
  state.opt_change->step();
  notify(Phase::ChangeNetwork);

  {
    FreezeGuard freeze_d(*net.discriminator);
    FreezeGuard freeze_cd(*net.change_net);
    state.opt_generator->zero_grad();
    loss::GeneratorLossParts parts;
    parts.image = loss::image_mse_loss(sr, batch.hr_t2);
    parts.content = loss::content_loss(sr, batch.hr_t2, *state.perceptual);
    parts.adversarial = loss::adversarial_loss(net.discriminator->forward(sr));
    parts.change = loss::contrastive_loss(net.change_net->forward(batch.hr_t1, sr), batch.gt, margin);
    auto loss_g = loss::generator_loss(parts, cfg.weights);
    bundle.l_MSE = parts.image.item<double>();
    bundle.l_MSE_VGG = parts.content.item<double>();
    bundle.l_D = parts.adversarial.item<double>();
    bundle.loss_G = checked(loss_g, "Loss_G");
    if (*bundle.loss_G > kDivergenceLimit) {
      throw TrainingError("Loss_G diverged: " + std::to_string(*bundle.loss_G) + " > 1e4");
    }
    loss_g.backward();
    state.opt_generator->step();
  }
  notify(Phase::Generator);
  ++state.iteration;
  return bundle;
}

TrainResult train(TrainState& state, const TrainingData& data, const TrainHooks& hooks) {
  const auto& cfg = state.config;
  if (data.train.empty()) throw DatasetError("training split is empty");
  const bool persist = !cfg.checkpoint_dir.empty();
  const std::filesystem::path dir = cfg.checkpoint_dir;
  if (persist) ensure_writable(dir);

  TrainResult result;
  const double theta = cfg.effective_threshold();
  const auto batch_size = static_cast<size_t>(cfg.batch_size);
  bool stop = false;

  while (!stop && state.epoch < cfg.epochs) {
    std::vector<size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::shuffle(order.begin(), order.end(), state.rng);

    for (size_t start = 0; start < order.size(); start += batch_size) {
      if (cfg.max_iterations > 0 && state.iteration >= cfg.max_iterations) {
        stop = true;
        break;
      }
      std::vector<data::PatchPair> chunk;
      for (size_t i = start; i < std::min(order.size(), start + batch_size); ++i) {
        chunk.push_back(data.train[order[i]]);
      }
      const auto bundle = train_step(make_batch(chunk), state, hooks.phase_observer);
      result.log.push_back(iteration_record(state.iteration, state.epoch, bundle));
    }
    const int64_t finished = state.epoch++;

    double val_f1 = -1.0;
    if (!data.val.empty() && (state.epoch % cfg.val_every == 0 || stop || state.epoch == cfg.epochs)) {
      val_f1 = eval::evaluate_split(state.net, data.val, theta, cfg.batch_size).report.change.f1;
      result.log.push_back(epoch_record(state.iteration, finished, val_f1));
      if (val_f1 > state.best_val_f1) {
        state.best_val_f1 = val_f1;
        state.best_epoch = finished;
        if (persist) {
          state.net.save(dir / "best");
          io::write_file_atomic(dir / "best" / "config.txt", config_to_text(cfg));
        }
      }
    }
    if (persist && cfg.checkpoint_every > 0 && state.epoch % cfg.checkpoint_every == 0) {
      save_state(state, dir / ("epoch_" + std::to_string(state.epoch)));
    }
    if (hooks.after_epoch && !hooks.after_epoch(state, finished, val_f1)) stop = true;
  }

  result.best_val_f1 = state.best_val_f1;
  result.best_epoch = state.best_epoch;
  if (persist) {
    save_state(state, dir / "last");
    write_log(dir / "log.jsonl", result.log);
  }
  return result;
}

data::DatasetOptions dataset_options(const ExperimentConfig& config) {
  data::DatasetOptions options;
  options.patch_size = config.patch_size;
  options.scale = config.scale();
  options.method = data::parse_degrade_method(config.degrade);
  options.seed = config.seed;
  options.augment_train = config.augment;
  return options;
}

TrainOutcome train(const ExperimentConfig& config) {
  auto cfg = config;
  cfg.normalize();
  cfg.validate();
  std::string root = cfg.data_root;
  if (root.empty()) {
    if (const char* env = std::getenv("SRCD_DATA_ROOT")) root = env;
  }
  if (root.empty()) throw DatasetError("no dataset root given (data_root or SRCD_DATA_ROOT)");
  cfg.data_root = root;

  auto split = data::prepare_dataset(data::load_scene_dir(root), dataset_options(cfg));
  auto state = init_state(cfg);
  if (!cfg.checkpoint_dir.empty()) {
    ensure_writable(cfg.checkpoint_dir);
    io::write_file_atomic(std::filesystem::path(cfg.checkpoint_dir) / "config.txt", config_to_text(cfg));
    data::write_manifest(std::filesystem::path(cfg.checkpoint_dir) / "manifest.jsonl", split);
  }
  auto result = train(state, {split.train, split.val});
  return {std::move(state), std::move(result), std::move(split)};
}

void save_state(TrainState& state, const std::filesystem::path& dir) {
  auto& s = state;
  state.net.save(dir);
  if (state.net.use_srm) {
    io::save_checkpoint(dir / "optim_generator.ckpt",
                        optimizer_checkpoint(*s.opt_generator, *s.net.generator, "adam_generator"));
    io::save_checkpoint(dir / "optim_discriminator.ckpt",
                        optimizer_checkpoint(*s.opt_discriminator, *s.net.discriminator, "adam_discriminator"));
  }
  io::save_checkpoint(dir / "optim_change_net.ckpt",
                      optimizer_checkpoint(*s.opt_change, *s.net.change_net, "adam_change_net"));
  std::ostringstream rng;
  rng << state.rng;
  nlohmann::ordered_json meta{{"iteration", state.iteration},
                              {"epoch", state.epoch},
                              {"best_val_f1", state.best_val_f1},
                              {"best_epoch", state.best_epoch},
                              {"rng", rng.str()}};
  io::write_file_atomic(dir / "state.json", meta.dump(2) + "\n");
  io::write_file_atomic(dir / "config.txt", config_to_text(state.config));
}

TrainState load_state(const std::filesystem::path& dir) {
  const auto cfg = load_config_file(dir / "config.txt");
  TrainState state;
  state.config = cfg;
  state.config.normalize();
  state.config.validate();
  state.net = SrcdNet::load(dir, state.config);
  make_optimizers(state);
  if (state.net.use_srm) {
    restore_optimizer(*state.opt_generator, *state.net.generator,
                      io::load_checkpoint(dir / "optim_generator.ckpt"));
    restore_optimizer(*state.opt_discriminator, *state.net.discriminator,
                      io::load_checkpoint(dir / "optim_discriminator.ckpt"));
    state.perceptual = loss::make_extractor(state.config.perceptual);
  }
  restore_optimizer(*state.opt_change, *state.net.change_net, io::load_checkpoint(dir / "optim_change_net.ckpt"));

  std::ifstream in(dir / "state.json");
  if (!in) throw CheckpointError("missing state.json in " + dir.string());
  const auto meta = nlohmann::json::parse(in);
  state.iteration = meta.at("iteration").get<int64_t>();
  state.epoch = meta.at("epoch").get<int64_t>();
  state.best_val_f1 = meta.at("best_val_f1").get<double>();
  state.best_epoch = meta.at("best_epoch").get<int64_t>();
  std::istringstream rng(meta.at("rng").get<std::string>());
  rng >> state.rng;
  return state;
}

void write_log(const std::filesystem::path& path, const std::vector<nlohmann::ordered_json>& log) {
  std::string content;
  for (const auto& record : log) content += record.dump() + "\n";
  io::write_file_atomic(path, content);
}

}  // namespace srcd::train
