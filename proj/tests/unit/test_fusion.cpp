#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "layerens/fusion/fusion.hpp"
#include "oracles.hpp"

namespace fusion = layerens::fusion;
using layerens::LabelMask;
using layerens::model::HeadOutputs;
using layerens::nn::Tensor;

namespace {

LabelMask square(std::size_t n, std::size_t y0, std::size_t x0, std::size_t side) {
  LabelMask m(n, n, 1);
  for (std::size_t y = y0; y < y0 + side; ++y)
    for (std::size_t x = x0; x < x0 + side; ++x) m(y, x) = 1;
  return m;
}

// Raters that perturb a common truth so EM has something to estimate.
std::vector<LabelMask> noisy_raters(std::size_t raters, std::size_t h, std::size_t w, std::mt19937_64& rng) {
  const LabelMask truth = oracle::random_mask(h, w, 1, 0.4, rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<LabelMask> out;
  for (std::size_t r = 0; r < raters; ++r) {
    const double flip = 0.05 + 0.25 * u(rng);
    LabelMask m = truth;
    for (std::size_t i = 0; i < m.size(); ++i)
      if (u(rng) < flip) m[i] = 1 - m[i];
    out.push_back(m);
  }
  return out;
}

}  // namespace

TEST(AverageFuse, IdenticalHeadsReturnTheHead) {
  std::mt19937_64 rng(1);
  const Tensor p = oracle::random_heads(1, 1, 5, 5, rng).probs[0];
  const HeadOutputs heads{{p, p, p, p}};
  const auto fused = fusion::average_fuse(heads, 1);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(fused.prob[i], p[i], 1e-15);
  EXPECT_EQ(fused.label, heads.label(0));
}

TEST(AverageFuse, HalfIsForeground) {
  const HeadOutputs heads{{Tensor({1, 1, 1}, 0.2), Tensor({1, 1, 1}, 0.8)}};
  const auto fused = fusion::average_fuse(heads, 0);
  EXPECT_DOUBLE_EQ(fused.prob[0], 0.5);
  EXPECT_EQ(fused.label[0], 1);
}

TEST(AverageFuse, SkipIgnoresEarlyHeads) {
  std::mt19937_64 rng(2);
  HeadOutputs heads = oracle::random_heads(5, 1, 6, 6, rng);
  const HeadOutputs tail{{heads.probs[3], heads.probs[4]}};
  const auto reference = fusion::average_fuse(tail, 0);
  for (std::size_t h = 0; h < 3; ++h) heads.probs[h] = oracle::random_heads(1, 1, 6, 6, rng).probs[0];
  const auto fused = fusion::average_fuse(heads, 3);
  EXPECT_EQ(fused.prob, reference.prob);
  EXPECT_EQ(fused.label, reference.label);
}

TEST(AverageFuse, RequiresTwoHeadsAfterSkip) {
  std::mt19937_64 rng(3);
  const HeadOutputs heads = oracle::random_heads(3, 1, 2, 2, rng);
  EXPECT_THROW(fusion::average_fuse(heads, 2), std::invalid_argument);
}

TEST(AverageFuse, MonotoneInEveryHead) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> pick(0, 15);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    HeadOutputs heads = oracle::random_heads(4, 1, 4, 4, rng);
    const auto before = fusion::average_fuse(heads, 0);
    const std::size_t h = pick(rng) % 4, i = pick(rng);
    heads.probs[h][i] += (1.0 - heads.probs[h][i]) * u(rng);
    const auto after = fusion::average_fuse(heads, 0);
    EXPECT_GE(after.prob[i], before.prob[i]);
  }
}

TEST(AverageFuse, MultiClassArgmax) {
  std::mt19937_64 rng(5);
  const HeadOutputs heads = oracle::random_heads(3, 4, 5, 5, rng);
  const auto fused = fusion::average_fuse(heads, 0);
  EXPECT_EQ(fused.label, layerens::labels_from_probabilities(fused.prob));
  EXPECT_EQ(fused.label.num_classes(), 3);
}

TEST(Staple, UnanimousRatersAreAFixedPoint) {
  const LabelMask m = square(8, 2, 3, 4);
  const std::vector<LabelMask> raters{m, m, m};
  const auto r = fusion::staple_fuse(raters);
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_NEAR(r.posterior[i], m[i], 1e-9);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_NEAR(r.sensitivity[j], 1.0, 1e-9);
    EXPECT_NEAR(r.specificity[j], 1.0, 1e-9);
  }
  EXPECT_TRUE(r.converged);
}

TEST(Staple, DuplicatedRaterFusesToItself) {
  const LabelMask m = square(6, 1, 1, 3);
  const std::vector<LabelMask> raters{m, m};
  EXPECT_EQ(fusion::staple_fuse_labels(raters).label, m);
}

TEST(Staple, DegenerateEmptyAndFull) {
  const LabelMask empty(5, 5, 1, 0), full(5, 5, 1, 1);
  for (const LabelMask& m : {empty, full}) {
    const std::vector<LabelMask> raters{m, m, m};
    const auto r = fusion::staple_fuse(raters);
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.iterations, 0);
    for (std::size_t i = 0; i < m.size(); ++i) EXPECT_EQ(r.posterior[i], m[i]);
    EXPECT_EQ(fusion::staple_fuse_labels(raters).label, m);
  }
}

TEST(Staple, DissentingRaterMatchesReference) {
  const LabelMask a = square(8, 2, 2, 4), c = square(8, 3, 3, 4);
  const std::vector<LabelMask> raters{a, a, c};
  const auto got = fusion::staple_fuse(raters);
  const auto want = oracle::staple_reference(raters);
  EXPECT_EQ(got.iterations, want.iterations);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) EXPECT_NEAR(got.posterior[y * 8 + x], want.posterior[y][x], 1e-6);
}

TEST(Staple, MatchesReferenceOnRandomInstances) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::size_t> extent(2, 8), count(2, 5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t h = extent(rng), w = extent(rng);
    const auto raters = trial % 2 ? noisy_raters(count(rng), h, w, rng) : [&] {
      std::vector<LabelMask> r;
      const std::size_t n = count(rng);
      for (std::size_t j = 0; j < n; ++j) r.push_back(oracle::random_mask(h, w, 1, 0.5, rng));
      return r;
    }();
    const auto got = fusion::staple_fuse(raters);
    const auto fused = fusion::staple_fuse_labels(raters);
    const auto want = oracle::staple_reference(raters);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        ASSERT_NEAR(got.posterior[y * w + x], want.posterior[y][x], 1e-6) << "trial " << trial;
        ASSERT_EQ(fused.label(y, x), want.posterior[y][x] >= 0.5 ? 1 : 0) << "trial " << trial;
      }
    for (std::size_t j = 0; j < raters.size(); ++j) {
      EXPECT_NEAR(got.sensitivity[j], want.p[j], 1e-6);
      EXPECT_NEAR(got.specificity[j], want.q[j], 1e-6);
    }
  }
}

TEST(Staple, RaterOrderDoesNotMatter) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    auto raters = noisy_raters(4, 7, 7, rng);
    const auto base = fusion::staple_fuse(raters);
    std::shuffle(raters.begin(), raters.end(), rng);
    const auto permuted = fusion::staple_fuse(raters);
    for (std::size_t i = 0; i < base.posterior.size(); ++i) EXPECT_NEAR(base.posterior[i], permuted.posterior[i], 1e-9);
  }
}

TEST(Staple, AgreedPixelsAreDecided) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const auto raters = noisy_raters(5, 8, 8, rng);
    const auto r = fusion::staple_fuse(raters, {1e-10, 500});
    bool degenerate = false;
    for (std::size_t j = 0; j < raters.size(); ++j)
      degenerate |= r.sensitivity[j] <= 0.0 || r.sensitivity[j] >= 1.0 || r.specificity[j] <= 0.0 ||
                    r.specificity[j] >= 1.0;
    if (degenerate || !r.converged) continue;
    for (std::size_t i = 0; i < 64; ++i) {
      bool all_fg = true, all_bg = true;
      for (const auto& m : raters) {
        all_fg &= m[i] != 0;
        all_bg &= m[i] == 0;
      }
      if (all_fg) EXPECT_GT(r.posterior[i], 0.99);
      if (all_bg) EXPECT_LT(r.posterior[i], 0.01);
    }
  }
}

TEST(Staple, PosteriorAndRatesStayInUnitInterval) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<LabelMask> raters;
    for (int j = 0; j < 3; ++j) raters.push_back(oracle::random_mask(6, 6, 1, 0.3, rng));
    const auto r = fusion::staple_fuse(raters);
    for (double v : r.posterior.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_GE(r.sensitivity[j], 0.0);
      EXPECT_LE(r.sensitivity[j], 1.0);
      EXPECT_GE(r.specificity[j], 0.0);
      EXPECT_LE(r.specificity[j], 1.0);
    }
  }
}

TEST(Staple, MultiClassLabelsAreConsistent) {
  std::mt19937_64 rng(10);
  const LabelMask truth = oracle::random_mask(8, 8, 3, 0.6, rng);
  const std::vector<LabelMask> raters{truth, truth, oracle::random_mask(8, 8, 3, 0.6, rng)};
  const auto fused = fusion::staple_fuse_labels(raters);
  EXPECT_EQ(fused.per_class.size(), 3u);
  EXPECT_EQ(fused.posterior.shape(), (layerens::nn::Shape{4, 8, 8}));
  EXPECT_EQ(fused.label, truth);
}

TEST(Staple, HeadsAreBinarisedBeforeFusion) {
  std::mt19937_64 rng(11);
  const HeadOutputs heads = oracle::random_heads(4, 1, 6, 6, rng);
  std::vector<LabelMask> labels;
  for (std::size_t h = 1; h < 4; ++h) labels.push_back(heads.label(h));
  EXPECT_EQ(fusion::staple_fuse_heads(heads, 1).label, fusion::staple_fuse_labels(labels).label);
}
