#include <gtest/gtest.h>

#include "srcd/sr_module.hpp"
#include "support.hpp"

using namespace srcd;
using namespace srcd::sr;

TEST(GeneratorConfig, StagesFollowScale) {
  GeneratorConfig cfg;
  cfg.scale = 4;
  EXPECT_EQ(cfg.upsample_stages(), 2);
  cfg.scale = 8;
  EXPECT_EQ(cfg.upsample_stages(), 3);
  EXPECT_EQ(1 << cfg.upsample_stages(), cfg.scale);
  cfg.scale = 2;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.n_residual_blocks = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  EXPECT_EQ(GeneratorConfig::from_json(cfg.to_json()), cfg);
}

TEST(Generator, OutputShapesForStandardSizes) {
  torch::NoGradGuard no_grad;
  Generator g4(GeneratorConfig{4, 64, 5});
  g4->eval();
  EXPECT_EQ(g4->forward(torch::rand({1, 3, 64, 64})).sizes(), (std::vector<int64_t>{1, 3, 256, 256}));
  Generator g8(GeneratorConfig{8, 64, 5});
  g8->eval();
  EXPECT_EQ(g8->forward(torch::rand({1, 3, 32, 32})).sizes(), (std::vector<int64_t>{1, 3, 256, 256}));
}

TEST(Generator, ShapeGridAndRangeWithReducedWidth) {
  torch::NoGradGuard no_grad;
  for (int n : {4, 8}) {
    torch::manual_seed(n);
    Generator g(GeneratorConfig{n, 8, 2});
    for (int64_t h : {8, 16, 32})
      for (int64_t w : {8, 16, 32}) {
        auto out = g->forward(torch::randn({2, 3, h, w}) * 3.0);
        EXPECT_EQ(out.sizes(), (std::vector<int64_t>{2, 3, h * n, w * n}));
        EXPECT_GE(out.min().item<float>(), 0.0f);
        EXPECT_LE(out.max().item<float>(), 1.0f);
      }
  }
}

TEST(Generator, RejectsTinyOrMalformedInput) {
  Generator g(GeneratorConfig{4, 4, 1});
  EXPECT_THROW(g->forward(torch::rand({1, 3, 4, 8})), std::invalid_argument);
  EXPECT_THROW(g->forward(torch::rand({1, 1, 8, 8})), std::invalid_argument);
}

TEST(Generator, BatchIndependenceInEvalMode) {
  torch::NoGradGuard no_grad;
  torch::manual_seed(2);
  Generator g(GeneratorConfig{4, 8, 1});
  g->eval();
  auto a = torch::rand({2, 3, 8, 8});
  auto b = a.clone();
  b[1] = torch::rand({3, 8, 8});
  EXPECT_TRUE(torch::allclose(g->forward(a)[0], g->forward(b)[0], 0.0, 1e-6));
}

TEST(Generator, FiniteDifferenceGradient) {
  torch::manual_seed(4);
  Generator g(GeneratorConfig{4, 4, 1});
  g->to(torch::kFloat64);
  const auto x = torch::rand({1, 3, 8, 8}, torch::kFloat64);
  const auto r = support::module_gradient_check(*g, [&] { return g->forward(x).sum(); });
  EXPECT_LE(r.max_rel_error, 1e-3) << r.worst;
  EXPECT_GT(r.checked, 1000);
}

TEST(Discriminator, ProbabilitiesPerBatchElement) {
  torch::NoGradGuard no_grad;
  torch::manual_seed(5);
  Discriminator d(DiscriminatorConfig{8, 32});
  d->eval();
  auto x = torch::rand({3, 3, 32, 48});
  x[2] = x[0];
  const auto p = d->forward(x);
  EXPECT_EQ(p.sizes(), (std::vector<int64_t>{3}));
  EXPECT_GT(p.min().item<float>(), 0.0f);
  EXPECT_LT(p.max().item<float>(), 1.0f);
  EXPECT_EQ(p[0].item<float>(), p[2].item<float>());
}

TEST(Discriminator, ZeroFinalLayerGivesOneHalf) {
  torch::NoGradGuard no_grad;
  Discriminator d(DiscriminatorConfig{8, 32});
  for (auto& item : d->named_parameters()) {
    if (item.key().rfind("fc2.", 0) == 0) item.value().zero_();
  }
  const auto p = d->forward(torch::rand({4, 3, 32, 32}));
  EXPECT_TRUE(torch::all(p == 0.5).item<bool>());
}

TEST(Discriminator, LayerLayout) {
  Discriminator d;
  std::vector<int64_t> widths, strides;
  int norms = 0;
  for (const auto& m : d->modules(false)) {
    if (auto* conv = m->as<torch::nn::Conv2d>()) {
      widths.push_back(conv->options.out_channels());
      strides.push_back(conv->options.stride()->at(0));
    }
    if (m->as<torch::nn::BatchNorm2d>()) ++norms;
  }
  EXPECT_EQ(widths, (std::vector<int64_t>{64, 64, 128, 128, 256, 256, 512, 512}));
  EXPECT_EQ(strides, (std::vector<int64_t>{1, 2, 1, 2, 1, 2, 1, 2}));
  EXPECT_EQ(norms, 7);
}

TEST(Discriminator, RejectsSmallInput) {
  Discriminator d(DiscriminatorConfig{8, 32});
  EXPECT_THROW(d->forward(torch::rand({1, 3, 16, 32})), std::invalid_argument);
}

TEST(Discriminator, FiniteDifferenceGradient) {
  torch::manual_seed(6);
  Discriminator d(DiscriminatorConfig{2, 4});
  d->to(torch::kFloat64);
  d->eval();  // running statistics keep the check away from batch-statistics coupling
  const auto x = torch::rand({2, 3, 32, 32}, torch::kFloat64);
  const auto r = support::module_gradient_check(*d, [&] { return d->logits(x).sum(); });
  EXPECT_LE(r.max_rel_error, 1e-3) << r.worst;
}
