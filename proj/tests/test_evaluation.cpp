#include <gtest/gtest.h>

#include "srcd/evaluate_split.hpp"
#include "srcd/evaluation.hpp"
#include "srcd/synth.hpp"
#include "support.hpp"

using namespace srcd;
using namespace srcd::eval;

namespace {

torch::Tensor random_mask(int64_t h, int64_t w, double p = 0.5) {
  return (torch::rand({1, h, w}) < p).to(torch::kFloat32);
}

}  // namespace

TEST(Confusion, Examples) {
  EXPECT_EQ(confusion(torch::ones({1, 10, 10}), torch::ones({1, 10, 10})), (ConfusionCounts{100, 0, 0, 0}));
  EXPECT_EQ(confusion(torch::ones({1, 10, 10}), torch::zeros({1, 10, 10})), (ConfusionCounts{0, 100, 0, 0}));
}

TEST(Confusion, MatchesPerPixelLoopAndSums) {
  torch::manual_seed(1);
  ConfusionCounts total, expected_total;
  for (int trial = 0; trial < 100; ++trial) {
    const auto pred = random_mask(16, 16, 0.3 + 0.004 * trial);
    const auto gt = random_mask(16, 16, 0.6 - 0.004 * trial);
    const auto c = confusion(pred, gt);
    const auto loop = support::brute_force_confusion(pred, gt);
    EXPECT_EQ(c.tp, loop.tp);
    EXPECT_EQ(c.fp, loop.fp);
    EXPECT_EQ(c.tn, loop.tn);
    EXPECT_EQ(c.fn, loop.fn);
    EXPECT_EQ(c.total(), 256);
    total += c;
    expected_total += ConfusionCounts{loop.tp, loop.fp, loop.tn, loop.fn};
  }
  EXPECT_EQ(total, expected_total);
}

TEST(Confusion, RejectsBadMasks) {
  EXPECT_THROW(confusion(torch::ones({1, 4, 4}), torch::ones({1, 4, 5})), std::invalid_argument);
  EXPECT_THROW(confusion(torch::full({1, 4, 4}, 0.5), torch::ones({1, 4, 4})), std::invalid_argument);
}

TEST(Metrics, Examples) {
  const auto m = metrics({50, 10, 0, 10});
  EXPECT_DOUBLE_EQ(m.precision, 5.0 / 6.0);
  EXPECT_DOUBLE_EQ(m.recall, 5.0 / 6.0);
  EXPECT_DOUBLE_EQ(m.f1, 5.0 / 6.0);
  EXPECT_NEAR(m.iou, 0.7143, 1e-4);
  const auto perfect = metrics({30, 0, 70, 0});
  EXPECT_EQ(perfect.precision, 1.0);
  EXPECT_EQ(perfect.iou, 1.0);
  const auto empty = metrics({0, 0, 100, 0});
  EXPECT_EQ(empty.precision, 1.0);
  EXPECT_EQ(empty.recall, 1.0);
  EXPECT_EQ(empty.f1, 1.0);
  EXPECT_EQ(empty.iou, 1.0);
}

TEST(Metrics, PrecisionUsesFalsePositives) {
  const auto m = metrics({40, 10, 0, 30});
  EXPECT_DOUBLE_EQ(m.precision, 40.0 / 50.0);
  EXPECT_DOUBLE_EQ(m.recall, 40.0 / 70.0);
}

TEST(Metrics, OneSidedEmptyConvention) {
  const auto no_pred = metrics({0, 0, 90, 10});
  EXPECT_EQ(no_pred.recall, 0.0);
  EXPECT_EQ(no_pred.precision, 0.0);
  EXPECT_EQ(no_pred.f1, 0.0);
  EXPECT_EQ(no_pred.iou, 0.0);
  const auto no_gt = metrics({0, 10, 90, 0});
  EXPECT_EQ(no_gt.precision, 0.0);
  EXPECT_EQ(no_gt.recall, 0.0);
}

TEST(Metrics, BoundsAndF1IouIdentity) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int64_t> u(0, 500);
  for (int trial = 0; trial < 1000; ++trial) {
    const ConfusionCounts c{u(rng), u(rng), u(rng), u(rng)};
    const auto m = metrics(c);
    for (double v : {m.precision, m.recall, m.f1, m.iou}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_LE(m.iou, m.f1 + 1e-15);
    EXPECT_NEAR(m.f1, 2.0 * m.iou / (1.0 + m.iou), 1e-9);
  }
}

TEST(Psnr, CapAndFormula) {
  const auto a = torch::rand({3, 16, 16}, torch::kFloat64);
  EXPECT_EQ(psnr(a, a), kPsnrCap);
  EXPECT_EQ(kPsnrCap, 100.0);
  const auto zero = torch::zeros({3, 8, 8}, torch::kFloat64);
  EXPECT_NEAR(psnr(zero, torch::full({3, 8, 8}, 0.1, torch::kFloat64)), 20.0, 1e-9);
  EXPECT_NEAR(psnr(zero, torch::full({3, 8, 8}, 0.01, torch::kFloat64)), 40.0, 1e-9);
  EXPECT_NEAR(psnr(zero, torch::full({3, 8, 8}, 2.55, torch::kFloat64), 255.0), 40.0, 1e-9);
  EXPECT_THROW(psnr(a, zero), std::invalid_argument);
}

TEST(Psnr, StrictlyDecreasesWithNoise) {
  torch::manual_seed(3);
  const auto img = torch::rand({3, 32, 32}, torch::kFloat64);
  const auto noise = torch::randn({3, 32, 32}, torch::kFloat64);
  double prev = kPsnrCap + 1.0;
  for (double amp : {0.001, 0.01, 0.03, 0.1, 0.3}) {
    const double p = psnr(img, img + amp * noise);
    EXPECT_LT(p, prev);
    prev = p;
  }
}

TEST(Ssim, IdentitySymmetryRangeAndOracle) {
  torch::manual_seed(4);
  const auto a = torch::rand({3, 24, 20}, torch::kFloat64);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-6);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = torch::rand({3, 16, 16}, torch::kFloat64);
    const auto y = (x + 0.2 * torch::randn({3, 16, 16}, torch::kFloat64)).clamp(0, 1);
    const double s = ssim(x, y);
    EXPECT_NEAR(s, ssim(y, x), 1e-9);
    EXPECT_GE(s, -1.0);
    EXPECT_LE(s, 1.0);
    EXPECT_NEAR(s, support::brute_force_ssim(x, y), 1e-9);
  }
}

TEST(Ssim, ConstantBlackVersusWhite) {
  const auto black = torch::zeros({1, 16, 16}, torch::kFloat64);
  const auto white = torch::ones({1, 16, 16}, torch::kFloat64);
  const double s = ssim(black, white);
  EXPECT_LT(s, 0.01);
  EXPECT_NEAR(s, support::brute_force_ssim(black, white), 1e-12);
}

TEST(Ssim, GaussianWindowAndSizeCheck) {
  const auto w = gaussian_window(11, 1.5);
  ASSERT_EQ(w.size(), 11u);
  EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(w[0], w[10]);
  EXPECT_GT(w[5], w[4]);
  EXPECT_THROW(ssim(torch::rand({3, 10, 16}), torch::rand({3, 10, 16})), std::invalid_argument);
}

TEST(Report, CsvHeaderAndRows) {
  MetricReport r;
  r.change = metrics({50, 10, 0, 10});
  const auto csv = report_csv({{"Base", "X4", r}});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "variant,mode,P,R,F1,IoU,PSNR_sr,SSIM_sr,PSNR_bicubic,SSIM_bicubic");
  EXPECT_NE(csv.find("Base,X4,0.833333,0.833333,0.833333,0.714286,,,,"), std::string::npos);
  const auto text = report_text({{"Base", "X4", r}});
  EXPECT_NE(text.find("83.33"), std::string::npos);
}

namespace {

SrcdNet tiny_net(bool srm) {
  train::ExperimentConfig cfg;
  cfg.mode = srm ? train::Mode::X4 : train::Mode::X1;
  cfg.cd_width = 4;
  cfg.gen_channels = 4;
  cfg.gen_residual_blocks = 1;
  cfg.disc_channels = 4;
  cfg.disc_dense_units = 8;
  cfg.normalize();
  return SrcdNet::create(cfg);
}

std::vector<data::PatchPair> tiny_patches(int scale) {
  data::SynthConfig sc;
  std::vector<data::PatchPair> out;
  for (const auto& s : data::synth_generate(sc, 3, 2))
    for (const auto& t : data::crop_to_patches(s, 32)) out.push_back(data::make_patch_pair(t, scale));
  return out;
}

}  // namespace

TEST(EvaluateSplit, ZeroDistanceModelFollowsConvention) {
  auto net = tiny_net(false);
  {
    torch::NoGradGuard no_grad;
    for (auto& p : net.change_net->parameters()) p.zero_();
  }
  const auto patches = tiny_patches(1);
  const auto result = evaluate_split(net, patches, 1.0);
  EXPECT_EQ(result.report.counts.tp + result.report.counts.fp, 0);
  EXPECT_EQ(result.report.change.recall, 0.0);
  EXPECT_FALSE(result.report.psnr_sr.has_value());
  EXPECT_EQ(result.records.size(), patches.size());
}

TEST(EvaluateSplit, DeterministicAdditiveAndReportsRestoration) {
  auto net = tiny_net(true);
  const auto patches = tiny_patches(4);
  const auto a = evaluate_split(net, patches, 0.01, 3);
  const auto b = evaluate_split(net, patches, 0.01, 3);
  EXPECT_EQ(a.report.counts, b.report.counts);
  EXPECT_EQ(a.report.psnr_sr, b.report.psnr_sr);
  ConfusionCounts sum;
  for (const auto& r : a.records) sum += r.counts;
  EXPECT_EQ(sum, a.report.counts);
  ASSERT_TRUE(a.report.psnr_bicubic.has_value());
  EXPECT_GT(*a.report.psnr_bicubic, 0.0);
  EXPECT_LE(*a.report.ssim_sr, 1.0);
  EXPECT_THROW(evaluate_split(net, std::span<const data::PatchPair>{}, 1.0), std::invalid_argument);
}
