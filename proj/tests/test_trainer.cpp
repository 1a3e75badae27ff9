#include <gtest/gtest.h>

#include <cstdlib>

#include "srcd/evaluate_split.hpp"
#include "srcd/synth.hpp"
#include "srcd/trainer.hpp"
#include "support.hpp"

using namespace srcd;
using namespace srcd::train;

namespace {

ExperimentConfig tiny_config(Mode mode, bool srm = true, bool sam = true) {
  ExperimentConfig cfg;
  cfg.mode = mode;
  cfg.use_srm = srm;
  cfg.use_sam = sam;
  cfg.batch_size = 4;
  cfg.epochs = 2;
  cfg.patch_size = 32;
  cfg.cd_width = 4;
  cfg.cd_reduction = 2;
  cfg.gen_channels = 4;
  cfg.gen_residual_blocks = 1;
  cfg.disc_channels = 4;
  cfg.disc_dense_units = 8;
  cfg.learning_rate = 1e-3;
  cfg.checkpoint_dir.clear();
  cfg.seed = 3;
  cfg.normalize();
  return cfg;
}

std::vector<data::PatchPair> tiny_patches(int scale, int scenes = 2, uint64_t seed = 1) {
  data::SynthConfig sc;
  std::vector<data::PatchPair> out;
  for (const auto& s : data::synth_generate(sc, seed, scenes))
    for (const auto& t : data::crop_to_patches(s, 32)) out.push_back(data::make_patch_pair(t, scale));
  return out;
}

using Snapshot = std::map<std::string, torch::Tensor>;

Snapshot snapshot(torch::nn::Module& m) {
  Snapshot s;
  for (const auto& item : m.named_parameters()) s[item.key()] = item.value().detach().clone();
  return s;
}

bool unchanged(const Snapshot& before, torch::nn::Module& m) {
  for (const auto& item : m.named_parameters())
    if (!torch::equal(before.at(item.key()), item.value())) return false;
  return true;
}

}  // namespace

TEST(ExperimentConfig, ModesVariantsAndNormalisation) {
  EXPECT_EQ(parse_mode("X8"), Mode::X8);
  EXPECT_EQ(scale_of(Mode::X1), 1);
  EXPECT_EQ(to_string(Mode::X4), "X4");
  EXPECT_THROW(parse_mode("X2"), ConfigError);
  EXPECT_EQ(parse_variant("Base+SRM"), Variant::BaseSrm);
  EXPECT_EQ(parse_variant("full"), Variant::Full);
  EXPECT_EQ(display_name(Variant::Full), "SRCDNet");
  EXPECT_THROW(parse_variant("nope"), ConfigError);

  ExperimentConfig cfg;
  cfg.mode = Mode::X1;
  cfg.use_srm = true;
  cfg.normalize();
  EXPECT_FALSE(cfg.use_srm);
  EXPECT_DOUBLE_EQ(cfg.effective_threshold(), 1.0);
}

TEST(ConfigureAblation, FourDistinctConfigsDifferingInFlags) {
  ExperimentConfig base;
  base.seed = 5;
  std::set<std::pair<bool, bool>> flags;
  for (auto v : kAllVariants) {
    const auto cfg = configure_ablation(base, v);
    flags.insert({cfg.use_srm, cfg.use_sam});
    auto stripped = cfg;
    stripped.use_srm = base.use_srm;
    stripped.use_sam = base.use_sam;
    EXPECT_EQ(config_to_text(stripped), config_to_text(base));
  }
  EXPECT_EQ(flags.size(), 4u);
  EXPECT_EQ(configure_ablation(base, Variant::Base).use_srm, false);
  EXPECT_EQ(configure_ablation(base, Variant::Base).use_sam, false);
  EXPECT_EQ(configure_ablation(base, Variant::BaseSam).use_sam, true);
  EXPECT_EQ(configure_ablation(base, Variant::BaseSrm).use_srm, true);
  base.mode = Mode::X1;
  EXPECT_FALSE(configure_ablation(base, Variant::Full).use_srm);
}

TEST(ConfigureAblation, BaseVariantBuildsNoAttentionAndUsesBicubic) {
  auto cfg = configure_ablation(tiny_config(Mode::X4), Variant::Base);
  auto net = SrcdNet::create(cfg);
  EXPECT_TRUE(net.generator.is_empty());
  for (const auto& item : net.change_net->named_parameters())
    EXPECT_EQ(item.key().find("cbam"), std::string::npos) << item.key();
  const auto batch = make_batch(tiny_patches(4, 1));
  EXPECT_TRUE(torch::equal(net.t2_input(batch), batch.bicubic_t2));
}

TEST(TrainStep, X1UpdatesOnlyTheChangeNetwork) {
  auto state = init_state(tiny_config(Mode::X1));
  EXPECT_FALSE(state.net.use_srm);
  std::vector<Phase> phases;
  const auto before = snapshot(*state.net.change_net);
  const auto bundle = train_step(make_batch(tiny_patches(1, 1)), state, [&](Phase p) { phases.push_back(p); });
  EXPECT_EQ(phases, (std::vector<Phase>{Phase::ChangeNetwork}));
  EXPECT_TRUE(bundle.loss_CD.has_value());
  EXPECT_FALSE(bundle.loss_G.has_value());
  EXPECT_FALSE(unchanged(before, *state.net.change_net));
  EXPECT_EQ(state.iteration, 1);
}

TEST(TrainStep, OrderAndParameterIsolation) {
  auto state = init_state(tiny_config(Mode::X4));
  auto& net = state.net;
  auto g0 = snapshot(*net.generator), d0 = snapshot(*net.discriminator), c0 = snapshot(*net.change_net);
  std::vector<Phase> phases;
  std::vector<std::string> violations;
  // Each sub-step may move exactly the parameters of its own network.
  auto observer = [&](Phase p) {
    phases.push_back(p);
    const bool g = !unchanged(g0, *net.generator), d = !unchanged(d0, *net.discriminator),
               c = !unchanged(c0, *net.change_net);
    const std::array<bool, 3> expected = {p == Phase::Generator, p == Phase::Discriminator,
                                          p == Phase::ChangeNetwork};
    if (std::array<bool, 3>{g, d, c} != expected) violations.push_back(to_string(p));
    g0 = snapshot(*net.generator);
    d0 = snapshot(*net.discriminator);
    c0 = snapshot(*net.change_net);
  };
  const auto bundle = train_step(make_batch(tiny_patches(4, 1)), state, observer);
  EXPECT_EQ(phases, (std::vector<Phase>{Phase::GeneratorForward, Phase::Discriminator, Phase::ChangeNetwork,
                                        Phase::Generator}));
  EXPECT_TRUE(violations.empty()) << violations.front();
  // Frozen networks are restored to trainable afterwards.
  for (const auto& p : net.change_net->parameters()) EXPECT_TRUE(p.requires_grad());
  for (const auto& p : net.discriminator->parameters()) EXPECT_TRUE(p.requires_grad());
  EXPECT_TRUE(net.change_net->is_training());

  // Loss_G uses the change loss recomputed after the CD update, so only the
  // other terms are pinned here.
  const auto& w = state.config.weights;
  EXPECT_GE(*bundle.loss_G, *bundle.l_MSE + w.alpha * *bundle.l_MSE_VGG + w.beta * *bundle.l_D - 1e-9);
  EXPECT_GT(*bundle.l_D, 0.0);
  EXPECT_LT(*bundle.l_D, 1.0);
}

TEST(TrainStep, ChangeLossReachesTheGenerator) {
  auto cfg = tiny_config(Mode::X4);
  cfg.weights.alpha = cfg.weights.beta = 0.0;
  auto a = init_state(cfg);
  cfg.weights.lambda_cd = 0.0;
  auto b = init_state(cfg);
  const auto batch = make_batch(tiny_patches(4, 1));
  train_step(batch, a);
  train_step(batch, b);
  EXPECT_FALSE(torch::equal(a.net.generator->parameters()[0], b.net.generator->parameters()[0]));
}

TEST(TrainStep, NonFiniteLossAbortsBeforeUpdate) {
  auto state = init_state(tiny_config(Mode::X1));
  auto batch = make_batch(tiny_patches(1, 1));
  batch.hr_t1[0][0][0][0] = std::nanf("");
  const auto before = snapshot(*state.net.change_net);
  EXPECT_THROW(train_step(batch, state), TrainingError);
  EXPECT_TRUE(unchanged(before, *state.net.change_net));
}

TEST(TrainStep, DivergenceGuard) {
  auto cfg = tiny_config(Mode::X4);
  cfg.weights.lambda_cd = 1e9;
  auto state = init_state(cfg);
  const auto before = snapshot(*state.net.generator);
  EXPECT_THROW(train_step(make_batch(tiny_patches(4, 1)), state), TrainingError);
  EXPECT_TRUE(unchanged(before, *state.net.generator));
}

TEST(Train, ZeroEpochsReturnsInitialState) {
  auto cfg = tiny_config(Mode::X1);
  cfg.epochs = 0;
  auto state = init_state(cfg);
  const auto before = snapshot(*state.net.change_net);
  const auto patches = tiny_patches(1);
  const auto result = train::train(state, {patches, patches});
  EXPECT_TRUE(result.log.empty());
  EXPECT_EQ(state.iteration, 0);
  EXPECT_TRUE(unchanged(before, *state.net.change_net));
}

TEST(Train, LogsAreDeterministicWithStableKeys) {
  const auto patches = tiny_patches(4);
  auto run = [&] {
    auto state = init_state(tiny_config(Mode::X4));
    return train::train(state, {patches, patches}).log;
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.size(), b.size());
  ASSERT_FALSE(a.empty());
  std::vector<std::string> keys;
  for (const auto& [k, v] : a.front().items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"iteration", "epoch", "loss_D", "loss_CD", "l_MSE", "l_MSE_VGG", "l_D",
                                            "loss_G", "val_F1"}));
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].dump(), b[i].dump());
    std::vector<std::string> ki;
    for (const auto& [k, v] : a[i].items()) ki.push_back(k);
    EXPECT_EQ(ki, keys);
  }
}

TEST(Train, PartialBatchAndIterationCap) {
  auto cfg = tiny_config(Mode::X1);
  cfg.batch_size = 3;
  cfg.epochs = 1;
  auto state = init_state(cfg);
  const auto patches = tiny_patches(1);  // 8 patches -> 3 batches
  train::train(state, {patches, {}});
  EXPECT_EQ(state.iteration, 3);
  cfg.epochs = 10;
  cfg.max_iterations = 5;
  auto capped = init_state(cfg);
  train::train(capped, {patches, {}});
  EXPECT_EQ(capped.iteration, 5);
}

TEST(Train, ResumeMatchesUninterruptedRun) {
  support::TempDir dir;
  const auto patches = tiny_patches(4);
  auto cfg = tiny_config(Mode::X4);
  cfg.epochs = 3;
  auto full = init_state(cfg);
  const auto full_log = train::train(full, {patches, patches}).log;

  cfg.epochs = 2;
  cfg.checkpoint_dir = (dir / "run").string();
  auto first = init_state(cfg);
  train::train(first, {patches, patches});
  auto resumed = load_state(dir / "run" / "last");
  EXPECT_EQ(resumed.iteration, first.iteration);
  resumed.config.epochs = 3;
  resumed.config.checkpoint_dir.clear();
  const auto tail = train::train(resumed, {patches, patches}).log;

  std::vector<std::string> expected, got;
  for (const auto& r : full_log)
    if (r["epoch"].get<int64_t>() == 2) expected.push_back(r.dump());
  for (const auto& r : tail) got.push_back(r.dump());
  ASSERT_FALSE(expected.empty());
  EXPECT_EQ(got, expected);
}

TEST(Train, BestCheckpointReproducesRecordedValidationF1) {
  support::TempDir dir;
  const auto patches = tiny_patches(1, 3);
  auto cfg = tiny_config(Mode::X1);
  cfg.epochs = 3;
  cfg.checkpoint_dir = (dir / "run").string();
  auto state = init_state(cfg);
  const auto result = train::train(state, {patches, patches});
  ASSERT_GE(result.best_epoch, 0);
  for (const auto* f : {"best/change_net.ckpt", "last/change_net.ckpt", "last/state.json", "log.jsonl"})
    EXPECT_TRUE(std::filesystem::exists(dir / "run" / f)) << f;
  auto best = SrcdNet::load(dir / "run" / "best", cfg);
  const auto report = eval::evaluate_split(best, patches, cfg.effective_threshold(), cfg.batch_size).report;
  EXPECT_EQ(report.change.f1, result.best_val_f1);
}

TEST(Train, ChangeLossDecreasesOnOverfitSet) {
  int improved = 0;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    auto cfg = tiny_config(Mode::X1);
    cfg.seed = seed;
    cfg.batch_size = 8;
    cfg.epochs = 15;
    auto state = init_state(cfg);
    const auto patches = tiny_patches(1, 2, seed + 100);
    const auto log = train::train(state, {patches, {}}).log;
    improved += log.back()["loss_CD"].get<double>() < log.front()["loss_CD"].get<double>();
  }
  EXPECT_GE(improved, 9);
}

TEST(Train, Errors) {
  auto cfg = tiny_config(Mode::X1);
  auto state = init_state(cfg);
  EXPECT_THROW(train::train(state, {{}, {}}), DatasetError);

  cfg.checkpoint_dir = "/proc/srcd_not_writable";
  auto s2 = init_state(cfg);
  EXPECT_THROW(train::train(s2, {tiny_patches(1, 1), {}}), Error);

  auto no_data = tiny_config(Mode::X1);
  no_data.data_root = "";
  unsetenv("SRCD_DATA_ROOT");
  EXPECT_THROW(train::train(no_data), DatasetError);
  no_data.data_root = "/no/such/dataset";
  EXPECT_THROW(train::train(no_data), DatasetError);
}

TEST(Train, X1AndX4InputsAreShapeCompatible) {
  auto x1 = SrcdNet::create(tiny_config(Mode::X1));
  auto x4 = SrcdNet::create(configure_ablation(tiny_config(Mode::X4), Variant::BaseSam));
  const auto b1 = make_batch(tiny_patches(1, 1));
  const auto b4 = make_batch(tiny_patches(4, 1));
  EXPECT_TRUE(torch::equal(x1.t2_input(b1), b1.hr_t2));
  EXPECT_EQ(x1.t2_input(b1).sizes(), x4.t2_input(b4).sizes());
}
