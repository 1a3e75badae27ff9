#include "srcd/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>

namespace srcd::train {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError("invalid value for " + key + ": '" + text + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "1" || text == "true" || text == "on" || text == "yes") return true;
  if (text == "0" || text == "false" || text == "off" || text == "no") return false;
  throw ConfigError("invalid boolean for " + key + ": '" + text + "'");
}

struct Accessor {
  std::string help;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
};

template <typename T>
Accessor number(std::string help, T ExperimentConfig::*field) {
  return {std::move(help),
          [field](const ExperimentConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return format_double(c.*field);
            } else {
              return std::to_string(c.*field);
            }
          },
          [field](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.*field = parse_number<T>(k, v);
          }};
}

template <typename T>
Accessor weight(std::string help, T loss::LossWeights::*field) {
  return {std::move(help), [field](const ExperimentConfig& c) { return format_double(c.weights.*field); },
          [field](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.weights.*field = parse_number<T>(k, v);
          }};
}

Accessor flag(std::string help, bool ExperimentConfig::*field) {
  return {std::move(help), [field](const ExperimentConfig& c) { return std::string(c.*field ? "true" : "false"); },
          [field](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.*field = parse_bool(k, v);
          }};
}

Accessor text(std::string help, std::string ExperimentConfig::*field) {
  return {std::move(help), [field](const ExperimentConfig& c) { return c.*field; },
          [field](ExperimentConfig& c, const std::string&, const std::string& v) { c.*field = v; }};
}

const std::vector<std::pair<std::string, Accessor>>& table() {
  static const std::vector<std::pair<std::string, Accessor>> entries = {
      {"mode",
       {"experiment mode: X1, X4 or X8",
        [](const ExperimentConfig& c) { return to_string(c.mode); },
        [](ExperimentConfig& c, const std::string&, const std::string& v) { c.mode = parse_mode(v); }}},
      {"use_srm", flag("enable the super-resolution module (forced off in X1)", &ExperimentConfig::use_srm)},
      {"use_sam", flag("enable the stacked attention module", &ExperimentConfig::use_sam)},
      {"epochs", number("training epochs", &ExperimentConfig::epochs)},
      {"batch_size", number("mini-batch size", &ExperimentConfig::batch_size)},
      {"learning_rate", number("Adam learning rate", &ExperimentConfig::learning_rate)},
      {"adam_beta1", number("Adam first-moment decay", &ExperimentConfig::adam_beta1)},
      {"adam_beta2", number("Adam second-moment decay", &ExperimentConfig::adam_beta2)},
      {"alpha", weight("content-loss weight", &loss::LossWeights::alpha)},
      {"beta", weight("adversarial-loss weight", &loss::LossWeights::beta)},
      {"lambda_cd", weight("change-loss weight in the generator objective", &loss::LossWeights::lambda_cd)},
      {"margin", weight("contrastive margin m", &loss::LossWeights::margin)},
      {"threshold",
       {"change threshold on the distance map ('auto' = margin/2)",
        [](const ExperimentConfig& c) { return c.threshold ? format_double(*c.threshold) : std::string("auto"); },
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          if (v == "auto") {
            c.threshold.reset();
          } else {
            c.threshold = parse_number<double>(k, v);
          }
        }}},
      {"seed", number("random seed (initialisation, split, shuffling)", &ExperimentConfig::seed)},
      {"checkpoint_dir", text("checkpoint/log directory ('' disables writing)", &ExperimentConfig::checkpoint_dir)},
      {"data_root", text("dataset root with A/, B/, label/ (fallback: SRCD_DATA_ROOT)", &ExperimentConfig::data_root)},
      {"patch_size", number("patch size P", &ExperimentConfig::patch_size)},
      {"augment", flag("add 90/180/270 degree rotations to the training split", &ExperimentConfig::augment)},
      {"degrade", text("degradation kernel: bicubic or area", &ExperimentConfig::degrade)},
      {"cd_width", number("change-network base width (64 = ResNet-18 widths)", &ExperimentConfig::cd_width)},
      {"cd_reduction", number("CBAM reduction ratio", &ExperimentConfig::cd_reduction)},
      {"gen_channels", number("generator feature width", &ExperimentConfig::gen_channels)},
      {"gen_residual_blocks", number("generator residual blocks", &ExperimentConfig::gen_residual_blocks)},
      {"disc_channels", number("discriminator base width", &ExperimentConfig::disc_channels)},
      {"disc_dense_units", number("discriminator hidden dense units", &ExperimentConfig::disc_dense_units)},
      {"perceptual", text("content-loss extractor: random, identity or VGG-19 weight file", &ExperimentConfig::perceptual)},
      {"pretrained_extractor", text("optional feature-extractor weights checkpoint", &ExperimentConfig::pretrained_extractor)},
      {"max_iterations", number("stop after this many iterations (0 = unlimited)", &ExperimentConfig::max_iterations)},
      {"val_every", number("validate every k epochs", &ExperimentConfig::val_every)},
      {"checkpoint_every", number("write a resumable checkpoint every k epochs (0 = end only)", &ExperimentConfig::checkpoint_every)},
  };
  return entries;
}

const Accessor& find(const std::string& key) {
  for (const auto& [name, accessor] : table()) {
    if (name == key) return accessor;
  }
  throw ConfigError("unknown config key: " + key);
}

}  // namespace

Mode parse_mode(const std::string& text) {
  if (text == "X1" || text == "x1") return Mode::X1;
  if (text == "X4" || text == "x4") return Mode::X4;
  if (text == "X8" || text == "x8") return Mode::X8;
  throw ConfigError("unknown mode: " + text + " (expected X1, X4 or X8)");
}

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::X1: return "X1";
    case Mode::X4: return "X4";
    case Mode::X8: return "X8";
  }
  return "X1";
}

int scale_of(Mode mode) {
  switch (mode) {
    case Mode::X1: return 1;
    case Mode::X4: return 4;
    case Mode::X8: return 8;
  }
  return 1;
}

Variant parse_variant(const std::string& text) {
  if (text == "base" || text == "Base") return Variant::Base;
  if (text == "sam" || text == "Base+SAM") return Variant::BaseSam;
  if (text == "srm" || text == "Base+SRM") return Variant::BaseSrm;
  if (text == "full" || text == "SRCDNet") return Variant::Full;
  throw ConfigError("unknown variant: " + text + " (expected base, sam, srm or full)");
}

std::string display_name(Variant variant) {
  switch (variant) {
    case Variant::Base: return "Base";
    case Variant::BaseSam: return "Base+SAM";
    case Variant::BaseSrm: return "Base+SRM";
    case Variant::Full: return "SRCDNet";
  }
  return "Base";
}

void ExperimentConfig::normalize() {
  if (mode == Mode::X1) use_srm = false;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (mode == Mode::X1 && use_srm) fail("X1 mode cannot enable the SR module");
  if (epochs < 0) fail("epochs must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    fail("Adam betas must lie in [0,1)");
  }
  try {
    weights.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (threshold && *threshold < 0.0) fail("threshold must be >= 0");
  if (patch_size < 16) fail("patch_size must be >= 16");
  if (patch_size % 8 != 0) fail("patch_size must be divisible by 8");
  if (patch_size % scale() != 0) fail("patch_size must be divisible by the scale factor");
  if (use_srm && patch_size < 32) fail("the discriminator needs patch_size >= 32");
  if (use_srm && patch_size / scale() < 8) fail("the generator needs LR patches of at least 8x8");
  if (degrade != "bicubic" && degrade != "area") fail("degrade must be bicubic or area");
  if (cd_width < 1 || cd_reduction < 1 || gen_channels < 1 || gen_residual_blocks < 1 ||
      disc_channels < 1 || disc_dense_units < 1) {
    fail("network widths must be positive");
  }
  if (max_iterations < 0) fail("max_iterations must be >= 0");
  if (val_every < 1) fail("val_every must be >= 1");
  if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
}

ExperimentConfig configure_ablation(ExperimentConfig base, Variant variant) {
  base.use_srm = variant == Variant::BaseSrm || variant == Variant::Full;
  base.use_sam = variant == Variant::BaseSam || variant == Variant::Full;
  base.normalize();
  return base;
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& [name, accessor] : table()) out.push_back({name, accessor.help});
    return out;
  }();
  return keys;
}

void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
  find(key).set(config, key, trim(value));
}

std::string get_config_value(const ExperimentConfig& config, const std::string& key) {
  return find(key).get(config);
}

ExperimentConfig load_config_file(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path.string());
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(number) + ": expected key = value");
    }
    set_config_value(base, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

std::string config_to_text(const ExperimentConfig& config) {
  std::string out;
  for (const auto& [name, accessor] : table()) out += name + " = " + accessor.get(config) + "\n";
  return out;
}

}  // namespace srcd::train
