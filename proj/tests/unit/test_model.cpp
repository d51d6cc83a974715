#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "layerens/data/dataset.hpp"
#include "layerens/error.hpp"
#include "layerens/model/losses.hpp"
#include "layerens/model/network.hpp"
#include "layerens/model/trainer.hpp"
#include "layerens/nn/ops.hpp"
#include "oracles.hpp"

namespace nn = layerens::nn;
namespace model = layerens::model;
using nn::Tensor;

namespace {

model::ModelConfig small_config(std::size_t size = 16, int classes = 1) {
  model::ModelConfig c;
  c.depth = 3;
  c.base_channels = 4;
  c.height = size;
  c.width = size;
  c.num_classes = classes;
  return c;
}

Tensor half_foreground_target() {
  Tensor t({1, 1, 4, 4}, 0.0);
  for (std::size_t i = 0; i < 8; ++i) t[i] = 1.0;
  return t;
}

}  // namespace

TEST(Network, DepthThreeHasFiveFullResolutionHeads) {
  model::Network net(small_config());
  EXPECT_EQ(net.num_heads(), 5u);
  std::mt19937_64 rng(1);
  const auto outputs = net.forward_all_heads(oracle::random_tensor({1, 16, 16}, rng));
  ASSERT_EQ(outputs.num_heads(), 5u);
  for (const auto& p : outputs.probs) EXPECT_EQ(p.shape(), (nn::Shape{1, 16, 16}));
  EXPECT_NO_THROW(outputs.validate());
}

TEST(Network, ReferenceLayoutHasTenHeads) {
  const auto config = model::ModelConfig::ten_head_reference();
  EXPECT_EQ(config.num_heads(), 10u);
  EXPECT_NO_THROW(config.validate());
}

TEST(Network, HeadScalesMatchUpsampleFactors) {
  const auto config = small_config();
  EXPECT_EQ(config.head_scales(), (std::vector<std::size_t>{0, 1, 2, 1, 0}));
  auto stem = config;
  stem.stem_downsample = true;
  EXPECT_EQ(stem.head_scales(), (std::vector<std::size_t>{1, 2, 3, 2, 1, 0}));
  model::Network net(stem);
  std::mt19937_64 rng(2);
  for (const auto& p : net.forward_all_heads(oracle::random_tensor({1, 16, 16}, rng)).probs) {
    EXPECT_EQ(p.shape(), (nn::Shape{1, 16, 16}));
  }
}

TEST(Network, MultiClassHeadsAreSoftmaxMaps) {
  model::Network net(small_config(16, 3));
  std::mt19937_64 rng(3);
  const auto outputs = net.forward_all_heads(oracle::random_tensor({1, 16, 16}, rng));
  for (const auto& p : outputs.probs) {
    ASSERT_EQ(p.dim(0), 4u);
    for (std::size_t i = 0; i < 256; ++i) {
      double total = 0.0;
      for (std::size_t c = 0; c < 4; ++c) total += p[c * 256 + i];
      EXPECT_NEAR(total, 1.0, 1e-6);
    }
  }
}

TEST(Network, EvalForwardIsBitIdentical) {
  model::Network net(small_config());
  std::mt19937_64 rng(4);
  const Tensor image = oracle::random_tensor({1, 16, 16}, rng);
  const auto a = net.forward_all_heads(image), b = net.forward_all_heads(image);
  for (std::size_t h = 0; h < a.num_heads(); ++h) EXPECT_EQ(a.probs[h], b.probs[h]);
}

TEST(Network, SingleHeadMatchesAllHeads) {
  model::Network net(small_config());
  std::mt19937_64 rng(5);
  const Tensor image = oracle::random_tensor({1, 16, 16}, rng);
  const auto all = net.forward_all_heads(image);
  for (std::size_t h = 0; h < net.num_heads(); ++h) EXPECT_EQ(net.forward_single_head(image, h), all.probs[h]);
}

TEST(Network, BatchForwardMatchesPerImage) {
  model::Network net(small_config());
  std::mt19937_64 rng(6);
  const Tensor batch = oracle::random_tensor({3, 1, 16, 16}, rng);
  const auto outs = net.forward_all_heads_batch(batch);
  ASSERT_EQ(outs.size(), 3u);
  for (std::size_t b = 0; b < 3; ++b) {
    const auto single = net.forward_all_heads(batch.slice(b));
    for (std::size_t h = 0; h < net.num_heads(); ++h) {
      for (std::size_t i = 0; i < single.probs[h].size(); ++i) EXPECT_NEAR(outs[b].probs[h][i], single.probs[h][i], 1e-12);
    }
  }
}

TEST(Network, SameSeedSameWeightsDifferentSeedDifferent) {
  auto c = small_config();
  model::Network a(c), b(c);
  c.seed = 43;
  model::Network d(c);
  const auto sa = a.state(), sb = b.state(), sd = d.state();
  for (std::size_t i = 0; i < sa.size(); ++i) EXPECT_EQ(sa[i].value, sb[i].value);
  EXPECT_NE(sa.front().value, sd.front().value);
}

TEST(Network, DeeperParametersDoNotAffectShallowerHeads) {
  model::Network net(small_config());
  std::mt19937_64 rng(7);
  const Tensor image = oracle::random_tensor({1, 16, 16}, rng);
  const auto before = net.forward_all_heads(image);
  const auto params = net.parameters();
  for (std::size_t t = 0; t + 1 < net.num_heads(); ++t) {
    // Perturb everything owned by heads deeper than t.
    std::vector<std::pair<nn::Var, Tensor>> saved;
    for (std::size_t deeper = t + 1; deeper < net.num_heads(); ++deeper) {
      for (const auto& name : net.parameters_owned_by_head(deeper)) {
        for (const auto& p : params) {
          if (p->name != name) continue;
          saved.emplace_back(p, p->value);
          for (auto& v : p->value.values()) v += 0.5;
        }
      }
    }
    ASSERT_FALSE(saved.empty());
    const auto after = net.forward_all_heads(image);
    for (std::size_t h = 0; h <= t; ++h) EXPECT_EQ(after.probs[h], before.probs[h]) << "head " << h << " t " << t;
    EXPECT_NE(after.probs.back(), before.probs.back());
    for (auto& [p, value] : saved) p->value = value;
  }
}

TEST(Network, GradientMatchesFiniteDifferences) {
  const auto check = oracle::check_network();
  EXPECT_LT(check.max_relative_error, 1e-3) << check.worst;
  EXPECT_GE(4 * check.checked, 3 * (check.checked + check.kink_crossings));
}

TEST(Network, RejectsWrongInputShape) {
  model::Network net(small_config());
  EXPECT_THROW(net.forward_all_heads(Tensor({1, 8, 8})), layerens::ShapeError);
  EXPECT_THROW(net.forward_all_heads(Tensor({2, 16, 16})), layerens::ShapeError);
}

TEST(Network, LoadStateNamesMismatchedShape) {
  model::Network a(small_config());
  auto wide = small_config();
  wide.base_channels = 6;
  model::Network b(wide);
  try {
    a.load_state(b.state());
    FAIL() << "expected ShapeError";
  } catch (const layerens::ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("enc0.conv1.weight"), std::string::npos) << e.what();
  }
}

TEST(Network, SaveLoadRoundTrip) {
  model::Network a(small_config());
  auto other = small_config();
  other.seed = 99;
  model::Network b(other);
  const auto path = std::filesystem::temp_directory_path() / "layerens_model_roundtrip.leckpt";
  a.save(path);
  b.load(path);
  std::mt19937_64 rng(8);
  const Tensor image = oracle::random_tensor({1, 16, 16}, rng);
  const auto pa = a.forward_all_heads(image), pb = b.forward_all_heads(image);
  for (std::size_t h = 0; h < pa.num_heads(); ++h) EXPECT_EQ(pa.probs[h], pb.probs[h]);
  std::filesystem::remove(path);
}

TEST(Config, RejectsIndivisibleResolution) {
  auto c = small_config(18);
  EXPECT_THROW(c.validate(), layerens::ConfigError);
  c = small_config();
  c.depth = 1;
  EXPECT_THROW(c.validate(), layerens::ConfigError);
}

TEST(GeneralizedDice, PerfectPredictionIsNearZero) {
  const Tensor t = half_foreground_target();
  EXPECT_LT(model::generalized_dice_loss(nn::constant(t), t)->value[0], 1e-4);
}

TEST(GeneralizedDice, InvertedPredictionIsNearOne) {
  const Tensor t = half_foreground_target();
  Tensor inverted = t;
  for (auto& v : inverted.values()) v = 1.0 - v;
  EXPECT_GT(model::generalized_dice_loss(nn::constant(inverted), t)->value[0], 0.999);
}

TEST(GeneralizedDice, UniformHalfMatchesHandValue) {
  const Tensor t = half_foreground_target();
  // One channel, 8 foreground pixels: w = 1/64, sum p t = 4, sum (p + t) = 16.
  const double w = 1.0 / 64.0, eps = 1e-5;
  const double expected = 1.0 - (2.0 * w * 4.0 + eps) / (w * 16.0 + eps);
  EXPECT_NEAR(model::generalized_dice_loss(nn::constant(Tensor({1, 1, 4, 4}, 0.5)), t)->value[0], expected, 1e-12);
}

TEST(WeightedCrossEntropy, PerfectOneHotIsNearZero) {
  Tensor t({1, 4, 2, 2}, 0.0);
  for (std::size_t i = 0; i < 4; ++i) t[i * 4 + i] = 1.0;
  const double w[] = {0.1, 0.3, 0.3, 0.3};
  EXPECT_LT(model::weighted_cross_entropy_loss(nn::constant(t), t, w)->value[0], 1e-5);
}

TEST(WeightedCrossEntropy, UniformOnBackgroundIsTenthOfLogFour) {
  Tensor t({1, 4, 3, 3}, 0.0);
  for (std::size_t i = 0; i < 9; ++i) t[i] = 1.0;
  const double w[] = {0.1, 0.3, 0.3, 0.3};
  EXPECT_NEAR(model::weighted_cross_entropy_loss(nn::constant(Tensor({1, 4, 3, 3}, 0.25)), t, w)->value[0],
              0.1 * std::log(4.0), 1e-12);
}

TEST(MultiHeadLoss, IdenticalHeadsEqualSingleHead) {
  const auto config = small_config();
  std::mt19937_64 rng(9);
  const Tensor t = half_foreground_target();
  auto p = nn::constant(oracle::random_tensor({1, 1, 4, 4}, rng, 0.05, 0.95));
  const nn::Var heads[] = {p, p, p};
  EXPECT_NEAR(model::multi_head_loss(config, heads, t)->value[0], model::head_loss(config, p, t)->value[0], 1e-15);
}

TEST(MultiHeadLoss, IsTheMeanOfHeadLosses) {
  const auto config = small_config();
  std::mt19937_64 rng(10);
  const Tensor t = half_foreground_target();
  auto a = nn::constant(oracle::random_tensor({1, 1, 4, 4}, rng, 0.05, 0.95));
  auto b = nn::constant(oracle::random_tensor({1, 1, 4, 4}, rng, 0.05, 0.95));
  const nn::Var heads[] = {a, b};
  const double la = model::head_loss(config, a, t)->value[0], lb = model::head_loss(config, b, t)->value[0];
  EXPECT_NEAR(model::multi_head_loss(config, heads, t)->value[0], 0.5 * (la + lb), 1e-15);
}

TEST(MultiHeadLoss, HeadOnlyParameterGetsOneNthOfItsGradient) {
  const auto config = small_config();
  model::Network net(config);
  std::mt19937_64 rng(11);
  const Tensor image = oracle::random_tensor({1, 1, 16, 16}, rng);
  Tensor target({1, 1, 16, 16}, 0.0);
  for (std::size_t i = 0; i < 100; ++i) target[i] = 1.0;
  auto params = net.parameters();
  nn::Var head0;
  for (const auto& p : params)
    if (p->name == "head0.conv.weight") head0 = p;
  ASSERT_TRUE(head0);

  nn::zero_grad(params);
  auto heads = net.forward(image, model::Mode::train);
  nn::backward(model::multi_head_loss(config, heads, target));
  const Tensor joint = head0->grad;

  nn::zero_grad(params);
  heads = net.forward(image, model::Mode::train);
  nn::backward(model::head_loss(config, heads[0], target));
  Tensor own = head0->grad;
  own *= 1.0 / static_cast<double>(net.num_heads());
  for (std::size_t i = 0; i < own.size(); ++i) EXPECT_NEAR(joint[i], own[i], 1e-12);
}

TEST(Training, LossDecreasesOnOneSample) {
  const auto config = small_config();
  model::Network net(config);
  std::mt19937_64 rng(12);
  const Tensor image = oracle::random_tensor({1, 1, 16, 16}, rng);
  Tensor target({1, 1, 16, 16}, 0.0);
  for (std::size_t y = 4; y < 12; ++y)
    for (std::size_t x = 3; x < 10; ++x) target.at(0, 0, y, x) = 1.0;
  nn::Adam opt(net.parameters(), {1e-2});
  std::vector<double> losses;
  for (int step = 0; step <= 50; ++step) {
    opt.zero_grad();
    auto loss = model::multi_head_loss(config, net.forward(image, model::Mode::train), target);
    losses.push_back(loss->value[0]);
    nn::backward(loss);
    opt.step();
  }
  EXPECT_LT(losses.back(), losses.front());
  EXPECT_LT(losses.back(), 0.5 * losses.front());
}

TEST(Training, TrainIsDeterministicAndRestoresBest) {
  layerens::data::DatasetSpec spec;
  spec.train_count = 6;
  spec.val_count = 2;
  spec.test_count = 1;
  spec.image_size = 16;
  const auto data = layerens::data::generate(spec);
  model::TrainOptions options;
  options.epochs = 3;
  options.batch_size = 4;
  model::Network a(small_config()), b(small_config());
  const auto la = model::train(a, data.train, data.val, options);
  const auto lb = model::train(b, data.train, data.val, options);
  ASSERT_EQ(la.epochs.size(), 3u);
  for (std::size_t e = 0; e < 3; ++e) EXPECT_EQ(la.epochs[e].train_loss, lb.epochs[e].train_loss);
  EXPECT_NEAR(model::evaluate_loss(a, data.val, 4), la.best_val_loss, 1e-12);
}
