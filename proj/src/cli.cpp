#include "srcd/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>

#include "srcd/checkpoint.hpp"
#include "srcd/evaluate_split.hpp"
#include "srcd/image_io.hpp"
#include "srcd/synth.hpp"
#include "srcd/trainer.hpp"

namespace srcd::cli {
namespace {

namespace fs = std::filesystem;
using train::ExperimentConfig;

/// Options shared by the subcommands that build an ExperimentConfig.
struct ConfigFlags {
  std::string config_file;
  std::string variant;
  std::map<std::string, std::string> values;  // key -> raw flag value

  void attach(CLI::App& app) {
    app.add_option("--config", config_file, "key = value configuration file");
    app.add_option("--variant", variant, "base | sam | srm | full");
    for (const auto& key : train::config_keys()) {
      auto* opt = app.add_option_function<std::string>(
          "--" + key.name, [this, name = key.name](const std::string& v) { values[name] = v; }, key.help);
      opt->type_name(key.name == "threshold" ? "FLOAT|auto" : "VALUE");
    }
  }

  /// Defaults, then the file, then flags.
  ExperimentConfig resolve() const {
    ExperimentConfig cfg;
    if (!config_file.empty()) cfg = train::load_config_file(config_file);
    for (const auto& [key, value] : values) train::set_config_value(cfg, key, value);
    if (!variant.empty()) {
      try {
        cfg = train::configure_ablation(cfg, train::parse_variant(variant));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
    cfg.normalize();
    cfg.validate();
    return cfg;
  }
};

std::string variant_name(const ExperimentConfig& cfg) {
  using train::Variant;
  if (cfg.use_srm) return train::display_name(cfg.use_sam ? Variant::Full : Variant::BaseSrm);
  return train::display_name(cfg.use_sam ? Variant::BaseSam : Variant::Base);
}

std::string slug(train::Variant variant) {
  switch (variant) {
    case train::Variant::Base: return "base";
    case train::Variant::BaseSam: return "sam";
    case train::Variant::BaseSrm: return "srm";
    case train::Variant::Full: return "full";
  }
  return "unknown";
}

std::vector<data::RawScenePair> load_scenes(const ExperimentConfig& cfg) {
  std::string root = cfg.data_root;
  if (root.empty()) {
    if (const char* env = std::getenv("SRCD_DATA_ROOT")) root = env;
  }
  if (root.empty()) throw DatasetError("no dataset root given (--data_root or SRCD_DATA_ROOT)");
  return data::load_scene_dir(root);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::write_file_atomic(path, text);
}

/// Nearest-neighbour upscale of an LR patch so it can sit in a panel.
ImageTensor upscale_nearest(const ImageTensor& lr, int64_t size) {
  if (lr.size(1) == size) return lr;
  return torch::nn::functional::interpolate(
             lr.unsqueeze(0), torch::nn::functional::InterpolateFuncOptions()
                                  .size(std::vector<int64_t>{size, size})
                                  .mode(torch::kNearest))
      .squeeze(0);
}

/// T1 | T2 | LR | bicubic | change-net T2 input | gt | prediction.
ImageTensor make_panel(const eval::PatchOutputs& out) {
  const auto& p = *out.pair;
  const int64_t size = p.hr_t1.size(1);
  auto mask3 = [](const torch::Tensor& m) { return m.to(torch::kFloat32).expand({3, -1, -1}); };
  auto sep = torch::ones({3, size, 2});
  std::vector<torch::Tensor> tiles{p.hr_t1, p.hr_t2, upscale_nearest(p.lr_t2, size), p.bicubic_t2,
                                   out.t2_input.clamp(0, 1), mask3(p.gt), mask3(out.prediction)};
  std::vector<torch::Tensor> row;
  for (size_t i = 0; i < tiles.size(); ++i) {
    if (i > 0) row.push_back(sep);
    row.push_back(tiles[i].to(torch::kFloat32));
  }
  return torch::cat(row, 2);
}

std::string record_json(const eval::PatchRecord& r) {
  nlohmann::ordered_json j{{"patch_id", r.patch_id},
                           {"tp", r.counts.tp},
                           {"fp", r.counts.fp},
                           {"fn", r.counts.fn},
                           {"tn", r.counts.tn},
                           {"P", r.change.precision},
                           {"R", r.change.recall},
                           {"F1", r.change.f1},
                           {"IoU", r.change.iou}};
  auto opt = [&](const char* key, const std::optional<double>& v) {
    j[key] = v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  opt("PSNR_sr", r.psnr_sr);
  opt("SSIM_sr", r.ssim_sr);
  opt("PSNR_bicubic", r.psnr_bicubic);
  opt("SSIM_bicubic", r.ssim_bicubic);
  return j.dump();
}

const std::vector<data::PatchPair>& pick_split(const data::DatasetSplit& split, const std::string& name) {
  if (name == "train") return split.train;
  if (name == "val") return split.val;
  if (name == "test") return split.test;
  throw ConfigError("unknown split '" + name + "' (train, val, test)");
}

/// Evaluates `net` on `patches`, writing reports, per-patch records and the
/// first `panels` visualisations under `out`.
eval::SplitEvaluation evaluate_to_dir(SrcdNet& net, const ExperimentConfig& cfg,
                                      const std::vector<data::PatchPair>& patches, const fs::path& out,
                                      int panels) {
  fs::create_directories(out);
  int written = 0;
  auto observer = [&](const eval::PatchOutputs& o) {
    if (written >= panels) return;
    ++written;
    const auto& id = o.pair->patch_id;
    io::write_image_png(out / "panels" / (id + ".png"), make_panel(o));
    io::write_distance_png(out / "distance" / (id + ".png"), o.distance, cfg.weights.margin);
    io::write_mask_png(out / "masks" / (id + ".png"), o.prediction);
  };
  if (panels > 0) {
    fs::create_directories(out / "panels");
    fs::create_directories(out / "distance");
    fs::create_directories(out / "masks");
  }
  auto result = eval::evaluate_split(net, patches, cfg.effective_threshold(), cfg.batch_size, observer);

  std::vector<eval::ReportRow> rows{{variant_name(cfg), train::to_string(cfg.mode), result.report}};
  write_text(out / "report.csv", eval::report_csv(rows));
  write_text(out / "report.txt", eval::report_text(rows));
  std::string records;
  for (const auto& r : result.records) records += record_json(r) + "\n";
  write_text(out / "records.jsonl", records);
  write_text(out / "config.txt", train::config_to_text(cfg));
  return result;
}

int gen_synth(const fs::path& out, const data::SynthConfig& config, uint64_t seed, int pairs) {
  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (pairs < 1) throw ConfigError("--pairs must be >= 1");
  auto scenes = data::synth_generate(config, seed, pairs);
  data::write_scene_dir(out, scenes);
  std::ostringstream meta;
  meta << "seed = " << seed << "\npairs = " << pairs << "\nheight = " << config.height
       << "\nwidth = " << config.width << "\nmin_shapes = " << config.min_shapes
       << "\nmax_shapes = " << config.max_shapes << "\nmin_shape_size = " << config.min_shape_size
       << "\nmax_shape_size = " << config.max_shape_size << "\nchange_probability = " << config.change_probability
       << "\ntexture_amplitude = " << config.texture_amplitude
       << "\nphotometric_noise = " << config.photometric_noise << "\n";
  write_text(out / "synth_config.txt", meta.str());
  std::cout << "wrote " << pairs << " scene pairs to " << out.string() << "\n";
  return kOk;
}

int run_train(const ExperimentConfig& cfg, const std::string& resume) {
  std::cout << train::config_to_text(cfg);
  if (resume.empty()) {
    auto outcome = train::train(cfg);
    std::cout << "best val F1 " << outcome.result.best_val_f1 << " at epoch " << outcome.result.best_epoch << "\n";
    return kOk;
  }
  auto state = train::load_state(resume);
  auto scenes = load_scenes(state.config);
  auto split = data::prepare_dataset(scenes, train::dataset_options(state.config));
  // Only the schedule may be extended on resume.
  state.config.epochs = cfg.epochs;
  state.config.max_iterations = cfg.max_iterations;
  state.config.checkpoint_dir = cfg.checkpoint_dir;
  if (!cfg.checkpoint_dir.empty()) write_text(fs::path(cfg.checkpoint_dir) / "config.txt", train::config_to_text(state.config));
  auto result = train::train(state, {split.train, split.val});
  std::cout << "best val F1 " << result.best_val_f1 << " at epoch " << result.best_epoch << "\n";
  return kOk;
}

ExperimentConfig checkpoint_config(const fs::path& dir) {
  if (!fs::exists(dir / "config.txt")) throw CheckpointError("no config.txt in checkpoint directory " + dir.string());
  try {
    return train::load_config_file(dir / "config.txt");
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("unreadable checkpoint config: ") + e.what());
  }
}

int run_eval(const fs::path& checkpoint, const ConfigFlags& overrides, const std::string& split_name,
             const fs::path& out, int panels) {
  auto cfg = checkpoint_config(checkpoint);
  // Only run-time settings may be overridden; architecture comes from the checkpoint.
  for (const auto& [key, value] : overrides.values) {
    if (key != "data_root" && key != "threshold" && key != "batch_size" && key != "seed")
      throw ConfigError("--" + key + " cannot be overridden at evaluation time");
    train::set_config_value(cfg, key, value);
  }
  cfg.normalize();
  cfg.validate();
  auto net = SrcdNet::load(checkpoint, cfg);
  auto split = data::prepare_dataset(load_scenes(cfg), train::dataset_options(cfg));
  const auto& patches = pick_split(split, split_name);
  if (patches.empty()) throw DatasetError("split '" + split_name + "' is empty");
  auto result = evaluate_to_dir(net, cfg, patches, out, panels);
  std::vector<eval::ReportRow> rows{{variant_name(cfg), train::to_string(cfg.mode), result.report}};
  std::cout << eval::report_text(rows);
  return kOk;
}

int run_ablate(ExperimentConfig base, bool mode_given, const fs::path& out, int panels) {
  std::vector<train::Mode> modes{train::Mode::X4, train::Mode::X8};
  if (mode_given) modes = {base.mode};
  std::vector<eval::ReportRow> rows;
  for (auto mode : modes) {
    for (auto variant : train::kAllVariants) {
      auto cfg = base;
      cfg.mode = mode;
      cfg = train::configure_ablation(cfg, variant);
      cfg.normalize();
      cfg.validate();
      const auto dir = out / train::to_string(mode) / slug(variant);
      cfg.checkpoint_dir = dir.string();
      std::cout << "== " << train::display_name(variant) << " " << train::to_string(mode) << "\n";
      auto outcome = train::train(cfg);
      auto net = fs::exists(dir / "best" / "change_net.ckpt") ? SrcdNet::load(dir / "best", cfg)
                                                               : std::move(outcome.state.net);
      auto result = evaluate_to_dir(net, cfg, outcome.split.test, dir / "test", panels);
      rows.push_back({train::display_name(variant), train::to_string(mode), result.report});
      // Rewritten after every row so partial runs leave a usable table.
      write_text(out / "ablation.csv", eval::report_csv(rows));
      write_text(out / "ablation.txt", eval::report_text(rows));
    }
  }
  write_text(out / "config.txt", train::config_to_text(base));
  std::cout << eval::report_text(rows);
  return kOk;
}

int run_sr_infer(const fs::path& checkpoint, const std::vector<std::string>& inputs, const fs::path& out) {
  const auto path = fs::is_directory(checkpoint) ? checkpoint / "generator.ckpt" : checkpoint;
  auto ckpt = io::load_checkpoint(path);
  if (ckpt.kind != "generator") throw CheckpointError(path.string() + " is not a generator checkpoint");
  sr::GeneratorConfig gcfg;
  try {
    gcfg = sr::GeneratorConfig::from_json(ckpt.meta);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("generator checkpoint lacks its configuration: ") + e.what());
  }
  sr::Generator generator(gcfg);
  io::load_module_state(*generator, ckpt);
  generator->eval();
  torch::NoGradGuard no_grad;
  fs::create_directories(out);
  for (const auto& input : inputs) {
    auto lr = io::read_image(input);
    auto sr = generator->forward(lr.unsqueeze(0)).squeeze(0);
    const auto dst = out / (fs::path(input).stem().string() + "_sr.png");
    io::write_image_png(dst, sr);
    std::cout << input << " -> " << dst.string() << " " << shape_string(sr) << "\n";
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Super-resolution change detection: data synthesis, training, evaluation"};
  app.require_subcommand(1);

  // gen-synth
  auto* synth_cmd = app.add_subcommand("gen-synth", "Write synthetic bi-temporal scene pairs");
  data::SynthConfig synth_cfg;
  uint64_t synth_seed = 0;
  int synth_pairs = 10;
  std::string synth_out;
  std::optional<int64_t> synth_size;
  synth_cmd->add_option("--out", synth_out, "Output directory (A/, B/, label/)")->required();
  synth_cmd->add_option("--pairs", synth_pairs, "Number of scene pairs");
  synth_cmd->add_option("--seed", synth_seed, "Random seed");
  synth_cmd->add_option("--size", synth_size, "Square scene side (overrides height/width)");
  synth_cmd->add_option("--height", synth_cfg.height, "Scene height");
  synth_cmd->add_option("--width", synth_cfg.width, "Scene width");
  synth_cmd->add_option("--min-shapes", synth_cfg.min_shapes, "Minimum shapes per scene");
  synth_cmd->add_option("--max-shapes", synth_cfg.max_shapes, "Maximum shapes per scene");
  synth_cmd->add_option("--min-shape-size", synth_cfg.min_shape_size, "Minimum shape side");
  synth_cmd->add_option("--max-shape-size", synth_cfg.max_shape_size, "Maximum shape side");
  synth_cmd->add_option("--change-prob", synth_cfg.change_probability, "Per-shape change probability");
  synth_cmd->add_option("--texture", synth_cfg.texture_amplitude, "Background texture amplitude");
  synth_cmd->add_option("--noise", synth_cfg.photometric_noise, "T2 photometric noise level");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train one configuration");
  ConfigFlags train_flags;
  train_flags.attach(*train_cmd);
  std::string train_out, train_data, resume;
  train_cmd->add_option("--out", train_out, "Checkpoint directory (alias of --checkpoint_dir)");
  train_cmd->add_option("--data", train_data, "Dataset root (alias of --data_root)");
  train_cmd->add_option("--resume", resume, "Resume from a saved training state directory");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a data split");
  ConfigFlags eval_flags;
  std::string eval_ckpt, eval_out = "eval", eval_split = "test", eval_data;
  int eval_panels = 8;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Directory with *.ckpt files and config.txt")->required();
  eval_cmd->add_option("--out", eval_out, "Output directory");
  eval_cmd->add_option("--split", eval_split, "train | val | test");
  eval_cmd->add_option("--data", eval_data, "Dataset root");
  eval_cmd->add_option("--panels", eval_panels, "Number of patches to render");
  // Every key is accepted so that architecture overrides fail with a config error, not a usage error.
  for (const auto& key : train::config_keys()) {
    eval_cmd->add_option_function<std::string>(
        "--" + key.name, [&eval_flags, k = key.name](const std::string& v) { eval_flags.values[k] = v; }, key.help);
  }

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and test the four ablation variants");
  ConfigFlags ablate_flags;
  ablate_flags.attach(*ablate_cmd);
  std::string ablate_out = "ablation", ablate_data;
  int ablate_panels = 4;
  ablate_cmd->add_option("--out", ablate_out, "Output directory");
  ablate_cmd->add_option("--data", ablate_data, "Dataset root (alias of --data_root)");
  ablate_cmd->add_option("--panels", ablate_panels, "Panels rendered per variant");

  // sr-infer
  auto* infer_cmd = app.add_subcommand("sr-infer", "Super-resolve rasters with a trained generator");
  std::string infer_ckpt, infer_out = "sr";
  std::vector<std::string> infer_inputs;
  infer_cmd->add_option("--checkpoint", infer_ckpt, "generator.ckpt or its directory")->required();
  infer_cmd->add_option("--input", infer_inputs, "Input rasters")->required();
  infer_cmd->add_option("--out", infer_out, "Output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (*synth_cmd) {
      if (synth_size) synth_cfg.height = synth_cfg.width = *synth_size;
      return gen_synth(synth_out, synth_cfg, synth_seed, synth_pairs);
    }
    if (*train_cmd) {
      if (!train_out.empty()) train_flags.values["checkpoint_dir"] = train_out;
      if (!train_data.empty()) train_flags.values["data_root"] = train_data;
      return run_train(train_flags.resolve(), resume);
    }
    if (*eval_cmd) {
      if (!eval_data.empty()) eval_flags.values["data_root"] = eval_data;
      return run_eval(eval_ckpt, eval_flags, eval_split, eval_out, eval_panels);
    }
    if (*ablate_cmd) {
      if (!ablate_data.empty()) ablate_flags.values["data_root"] = ablate_data;
      const bool mode_given = ablate_flags.values.count("mode") > 0;
      auto base = ablate_flags.resolve();
      return run_ablate(base, mode_given, ablate_out, ablate_panels);
    }
    if (*infer_cmd) return run_sr_infer(infer_ckpt, infer_inputs, infer_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DatasetError& e) {
    std::cerr << "dataset error: " << e.what() << "\n";
    return kDatasetError;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kCheckpointError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsageError;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace srcd::cli
