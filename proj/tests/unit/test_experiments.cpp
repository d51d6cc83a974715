#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "layerens/data/dataset.hpp"
#include "layerens/experiments/experiments.hpp"
#include "layerens/model/network.hpp"
#include "oracles.hpp"

namespace ex = layerens::experiments;
namespace model = layerens::model;
using layerens::nn::Tensor;

namespace {

struct Fixture {
  layerens::data::Dataset data;
  model::Network network;
};

Fixture untrained(std::size_t test_count = 8) {
  layerens::data::DatasetSpec spec;
  spec.train_count = 1;
  spec.val_count = 1;
  spec.test_count = test_count;
  spec.image_size = 16;
  model::ModelConfig config;
  config.height = config.width = 16;
  config.base_channels = 4;
  return {layerens::data::generate(spec), model::Network(config)};
}

ex::ImageEvaluation fake_evaluation(double dsc, std::optional<double> mhd, double aula, double entropy) {
  ex::ImageEvaluation e;
  e.metrics.dsc = dsc;
  e.metrics.mhd = mhd;
  e.report.aula = aula;
  e.report.entropy_sum = entropy;
  e.report.mi_sum = entropy * 0.5;
  e.report.variance_sum = entropy * 0.25;
  return e;
}

}  // namespace

TEST(QcCurve, HandSimulatedExample) {
  const double dsc[] = {0.95, 0.80, 0.85, 0.99}, unc[] = {0.1, 0.9, 0.5, 0.0};
  const auto c = ex::qc_curve(unc, dsc, 0.9, 5);
  EXPECT_EQ(c.fractions, (std::vector<double>{0, 0.25, 0.5, 0.75, 1}));
  EXPECT_EQ(c.remaining, (std::vector<double>{1, 0.5, 0, 0, 0}));
  EXPECT_EQ(c.poor_count, 2u);
}

TEST(QcCurve, OracleOrderingIsIdeal) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.5, 1.0);
  for (std::size_t n : {7u, 40u, 150u}) {
    std::vector<double> dsc(n), unc(n);
    for (std::size_t i = 0; i < n; ++i) unc[i] = -(dsc[i] = u(rng));
    const auto c = ex::qc_curve(unc, dsc);
    EXPECT_EQ(c.remaining, c.ideal);
    EXPECT_EQ(c.auc, c.ideal_auc);
    EXPECT_DOUBLE_EQ(c.random_auc, 0.5);
  }
}

TEST(QcCurve, IdealReachesZeroAtPoorShare) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.6, 1.0);
  const std::size_t n = 100;
  std::vector<double> dsc(n), unc(n);
  for (std::size_t i = 0; i < n; ++i) {
    dsc[i] = u(rng);
    unc[i] = u(rng);
  }
  const auto c = ex::qc_curve(unc, dsc);
  const double share = static_cast<double>(c.poor_count) / n;
  for (std::size_t i = 0; i < c.fractions.size(); ++i) {
    if (c.fractions[i] >= share - 1e-12) EXPECT_EQ(c.ideal[i], 0.0);
    if (i > 0) EXPECT_LE(c.ideal[i], c.ideal[i - 1]);
    if (i > 0) EXPECT_LE(c.remaining[i], c.remaining[i - 1]);
  }
  EXPECT_EQ(c.remaining.front(), 1.0);
  EXPECT_EQ(c.remaining.back(), 0.0);
  EXPECT_LE(c.ideal_auc, c.auc);
  EXPECT_LE(c.auc, 1.0);
}

TEST(QcCurve, IndependentUncertaintyTracksRandom) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t n = 20000;
  std::vector<double> dsc(n), unc(n);
  for (std::size_t i = 0; i < n; ++i) {
    dsc[i] = u(rng);
    unc[i] = u(rng);
  }
  const auto c = ex::qc_curve(unc, dsc, 0.5);
  for (std::size_t i = 0; i < c.fractions.size(); ++i) EXPECT_NEAR(c.remaining[i], c.random[i], 0.03);
}

TEST(QcCurve, NoPoorCasesIsFlagged) {
  const double dsc[] = {0.95, 0.99, 0.97}, unc[] = {1, 2, 3};
  const auto c = ex::qc_curve(unc, dsc);
  EXPECT_TRUE(c.no_poor_cases);
  for (double r : c.remaining) EXPECT_EQ(r, 0.0);
}

TEST(QcCurve, TiesFlagLowerIndexFirst) {
  const double dsc[] = {0.95, 0.5}, unc[] = {1.0, 1.0};
  const auto c = ex::qc_curve(unc, dsc, 0.9, 3);  // f = 0.5 flags one image: index 0
  EXPECT_EQ(c.remaining[1], 1.0);
}

TEST(Correlation, MonotoneUncertaintyGivesUnitRho) {
  std::vector<ex::ImageEvaluation> evals;
  for (int i = 0; i < 12; ++i) {
    const double dsc = 0.5 + 0.04 * i;
    evals.push_back(fake_evaluation(dsc, 10.0 - i, dsc * dsc, std::exp(-dsc)));
  }
  for (const auto& row : ex::correlation_table(evals)) {
    ASSERT_TRUE(row.rho.has_value()) << row.uncertainty;
    const bool aula = row.uncertainty == "aula";
    const double sign = (aula ? 1.0 : -1.0) * (row.segmentation == "dsc" ? 1.0 : -1.0);
    EXPECT_NEAR(*row.rho, sign, 1e-12) << row.uncertainty << " vs " << row.segmentation;
  }
}

TEST(Correlation, UndefinedMhdIsExcluded) {
  std::vector<ex::ImageEvaluation> evals;
  for (int i = 0; i < 6; ++i) evals.push_back(fake_evaluation(0.1 * i, i % 2 ? std::optional<double>(i) : std::nullopt, i, i));
  for (const auto& row : ex::correlation_table(evals)) {
    EXPECT_EQ(row.count, row.segmentation == "mhd" ? 3u : 6u);
  }
}

TEST(Correlation, InvariantUnderMonotoneTransform) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<ex::ImageEvaluation> a, b;
  for (int i = 0; i < 30; ++i) {
    const double dsc = g(rng), aula = dsc + g(rng), ent = -dsc + g(rng);
    a.push_back(fake_evaluation(dsc, g(rng), aula, ent));
    b.push_back(a.back());
    b.back().report.aula = std::tanh(aula) * 3 + 1;
    b.back().report.entropy_sum = std::exp(ent);
  }
  const auto ra = ex::correlation_table(a), rb = ex::correlation_table(b);
  for (std::size_t i = 0; i < ra.size(); ++i) EXPECT_NEAR(*ra[i].rho, *rb[i].rho, 1e-12);
}

TEST(Correlation, ShuffledPairingIsWeak) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ex::ImageEvaluation> evals;
  std::vector<double> aula(60);
  for (auto& v : aula) v = u(rng);
  std::vector<double> dsc = aula;
  std::shuffle(dsc.begin(), dsc.end(), rng);
  for (std::size_t i = 0; i < 60; ++i) evals.push_back(fake_evaluation(dsc[i], u(rng), aula[i], u(rng)));
  for (const auto& row : ex::correlation_table(evals)) EXPECT_LT(std::abs(*row.rho), 0.3) << row.uncertainty;
}

TEST(Corruption, SubsetsAreNestedAndSized) {
  for (std::size_t n : {1u, 10u, 37u}) {
    const auto half = ex::corrupted_subset(n, 0.5, 42), all = ex::corrupted_subset(n, 1.0, 42);
    EXPECT_EQ(half.size(), static_cast<std::size_t>(std::ceil(0.5 * n)));
    EXPECT_EQ(all.size(), n);
    EXPECT_TRUE(ex::corrupted_subset(n, 0.0, 42).empty());
    EXPECT_TRUE(std::includes(all.begin(), all.end(), half.begin(), half.end()));
  }
  EXPECT_THROW(ex::corrupted_subset(5, 1.5, 1), std::invalid_argument);
}

TEST(Corruption, ParseNames) {
  EXPECT_EQ(ex::parse_corruption("gaussian"), ex::Corruption::gaussian);
  EXPECT_EQ(ex::parse_corruption(ex::to_string(ex::Corruption::random_convolution)), ex::Corruption::random_convolution);
  EXPECT_THROW(ex::parse_corruption("blur"), std::invalid_argument);
}

TEST(Infer, ThreadCountDoesNotChangeResults) {
  const auto f = untrained(5);
  const auto one = ex::infer(f.network, f.data.test, 1), three = ex::infer(f.network, f.data.test, 3);
  for (std::size_t i = 0; i < one.size(); ++i)
    for (std::size_t h = 0; h < one[i].num_heads(); ++h) EXPECT_EQ(one[i].probs[h], three[i].probs[h]);
}

TEST(PdShift, HistogramsAreConsistent) {
  const auto f = untrained(10);
  ex::ExperimentSettings settings;
  settings.corruption_fractions = {0.0, 0.0, 0.5, 1.0};
  const auto h = ex::pd_shift(f.network, f.data.test, settings);
  ASSERT_EQ(h.size(), 4u);
  EXPECT_EQ(h[0].counts, h[1].counts);
  for (const auto& hist : h) {
    EXPECT_EQ(std::accumulate(hist.counts.begin(), hist.counts.end(), std::size_t{0}), 10u);
    EXPECT_EQ(hist.counts.size(), f.network.num_heads());
  }
  EXPECT_EQ(h[2].corrupted, 5u);

  settings.noise_mean = 0.0;
  settings.noise_std = 0.0;
  const auto identity = ex::pd_shift(f.network, f.data.test, settings);
  EXPECT_EQ(identity[3].counts, h[0].counts);
}

TEST(Sweep, LastSkipIsThePlainLastHead) {
  const auto f = untrained(6);
  const auto heads = ex::infer(f.network, f.data.test);
  const auto rows = ex::calibration_sweep(f.data.test, heads);
  ASSERT_EQ(rows.size(), f.network.num_heads());
  EXPECT_TRUE(rows.back().plain);
  std::vector<double> nll, dsc;
  for (std::size_t i = 0; i < heads.size(); ++i) {
    const auto rec = layerens::metrics::evaluate(heads[i].label(heads[i].num_heads() - 1), heads[i].probs.back(),
                                                 f.data.test[i].mask);
    nll.push_back(rec.nll);
    dsc.push_back(rec.dsc);
  }
  EXPECT_EQ(rows.back().nll.mean, layerens::metrics::summarize(nll).mean);
  EXPECT_EQ(rows.back().dsc.mean, layerens::metrics::summarize(dsc).mean);
}

TEST(Summary, PerfectPredictions) {
  const auto f = untrained(4);
  std::vector<model::HeadOutputs> heads;
  for (const auto& s : f.data.test) heads.push_back({std::vector<Tensor>(5, layerens::one_hot(s.mask))});
  const auto evals = ex::evaluate_images(f.data.test, heads, {});
  const auto t = ex::summary_table(evals);
  EXPECT_EQ(t.dsc.mean, 1.0);
  EXPECT_EQ(t.dsc.std, 0.0);
  EXPECT_EQ(t.mhd.mean, 0.0);
  EXPECT_EQ(t.mhd.std, 0.0);
  EXPECT_LE(t.nll.mean, 1e-6);
  for (const auto& e : evals) {
    EXPECT_EQ(e.report.aula, 1.0);
    EXPECT_EQ(e.report.prediction_depth, 1u);
  }
}

TEST(Summary, AggregatesMatchPerImageValues) {
  const auto f = untrained(6);
  const auto heads = ex::infer(f.network, f.data.test);
  const auto evals = ex::evaluate_images(f.data.test, heads, {});
  const auto t = ex::summary_table(evals);
  double dsc = 0.0, nll = 0.0;
  for (const auto& e : evals) {
    dsc += e.metrics.dsc;
    nll += e.metrics.nll;
  }
  EXPECT_NEAR(t.dsc.mean, dsc / evals.size(), 1e-12);
  EXPECT_NEAR(t.nll.mean, nll / evals.size(), 1e-12);
  EXPECT_EQ(t.dsc.count, evals.size());
}
