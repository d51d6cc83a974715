#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>
#include <sstream>

#include "layerens/data/dataset.hpp"
#include "layerens/data/io.hpp"
#include "layerens/data/transforms.hpp"
#include "layerens/metrics/metrics.hpp"
#include "oracles.hpp"

namespace data = layerens::data;
using layerens::LabelMask;
using layerens::nn::Tensor;

namespace {

data::DatasetSpec small_spec(int classes = 1) {
  data::DatasetSpec s;
  s.train_count = 6;
  s.val_count = 3;
  s.test_count = 4;
  s.image_size = 32;
  s.num_classes = classes;
  return s;
}

std::pair<double, double> mean_std(const Tensor& t) {
  double m = 0.0, s = 0.0;
  for (double v : t.values()) m += v;
  m /= static_cast<double>(t.size());
  for (double v : t.values()) s += (v - m) * (v - m);
  return {m, std::sqrt(s / static_cast<double>(t.size()))};
}

std::set<std::int32_t> classes_of(const LabelMask& m) { return {m.labels().begin(), m.labels().end()}; }

Tensor ramp(std::size_t n) {
  Tensor t({1, n, n});
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) t.at(0, y, x) = 0.3 * y - 0.7 * x + 2.0;
  return t;
}

}  // namespace

TEST(Generate, SameSpecSameDataset) {
  const auto a = data::generate(small_spec()), b = data::generate(small_spec());
  for (auto split : {data::Split::train, data::Split::val, data::Split::test}) {
    ASSERT_EQ(a.split(split).size(), b.split(split).size());
    for (std::size_t i = 0; i < a.split(split).size(); ++i) {
      EXPECT_EQ(a.split(split)[i].image, b.split(split)[i].image);
      EXPECT_EQ(a.split(split)[i].mask, b.split(split)[i].mask);
      EXPECT_EQ(a.split(split)[i].id, b.split(split)[i].id);
    }
  }
  auto other = small_spec();
  other.seed = 7;
  EXPECT_NE(data::generate(other).train[0].image, a.train[0].image);
}

TEST(Generate, SplitsDoNotShareSamples) {
  const auto d = data::generate(small_spec());
  EXPECT_NE(d.train[0].image, d.val[0].image);
  EXPECT_NE(d.train[0].image, d.test[0].image);
  EXPECT_EQ(data::generate_sample(small_spec(), data::Split::test, 2).image, d.test[2].image);
}

TEST(Generate, BinaryMasksHaveClassesZeroAndOne) {
  for (const auto& s : data::generate(small_spec()).train) {
    EXPECT_EQ(classes_of(s.mask), (std::set<std::int32_t>{0, 1}));
    EXPECT_EQ(s.image.shape(), (layerens::nn::Shape{1, 32, 32}));
  }
}

TEST(Generate, MultiClassStructuresAreDisjointAndPresent) {
  for (const auto& s : data::generate(small_spec(3)).train) {
    // A pixel carries one label, so disjointness reduces to every class being present.
    EXPECT_EQ(classes_of(s.mask), (std::set<std::int32_t>{0, 1, 2, 3}));
    EXPECT_NO_THROW(s.mask.validate());
  }
}

TEST(Generate, LowContrastFractionIsTagged) {
  auto spec = small_spec();
  spec.train_count = 200;
  const auto d = data::generate(spec);
  const auto tagged = std::count_if(d.train.begin(), d.train.end(), [](const auto& s) { return s.has_tag("low-contrast"); });
  EXPECT_GT(tagged, 25);
  EXPECT_LT(tagged, 75);
}

TEST(Normalize, ZeroMeanUnitStd) {
  const auto [m, s] = mean_std(data::normalize(ramp(16)));
  EXPECT_NEAR(m, 0.0, 1e-12);
  EXPECT_NEAR(s, 1.0, 1e-12);
  const Tensor once = data::normalize(data::generate(small_spec()).train[0].image);
  const Tensor twice = data::normalize(once);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(once[i], twice[i], 1e-9);
  EXPECT_THROW(data::normalize(Tensor({1, 4, 4}, 3.0)), std::invalid_argument);
}

TEST(Augment, FlipsAndRotationsInvert) {
  const auto s = data::generate(small_spec()).train[0];
  const auto hh = data::flip_horizontal(data::flip_horizontal(s));
  EXPECT_EQ(hh.image, s.image);
  EXPECT_EQ(hh.mask, s.mask);
  EXPECT_EQ(data::flip_vertical(data::flip_vertical(s)).mask, s.mask);
  for (int q = 0; q < 4; ++q) {
    const auto r = data::rotate90(s, q);
    EXPECT_EQ(r.mask.count(1), s.mask.count(1));
    const auto back = data::rotate90(r, 4 - q);
    EXPECT_EQ(layerens::metrics::dice(back.mask, s.mask), 1.0);
    EXPECT_EQ(back.image, s.image);
  }
}

TEST(Augment, PatchSwapPermutesPixels) {
  const auto s = data::generate(small_spec()).train[1];
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const Tensor swapped = data::swap_patches(s.image, data::kSwapPatchSize, rng);
    std::vector<double> a(s.image.values().begin(), s.image.values().end());
    std::vector<double> b(swapped.values().begin(), swapped.values().end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
  }
}

TEST(Augment, PreservesClassCountsAndMaskSet) {
  const auto d = data::generate(small_spec(3));
  std::mt19937_64 rng(4);
  for (const auto& s : d.train) {
    const auto a = data::augment(s, rng);
    EXPECT_EQ(classes_of(a.mask), classes_of(s.mask));
    for (int c = 0; c <= 3; ++c) EXPECT_EQ(a.mask.count(c), s.mask.count(c));
  }
}

TEST(Corrupt, ZeroNoiseIsIdentity) {
  const Tensor img = ramp(8);
  std::mt19937_64 rng(5);
  EXPECT_EQ(data::corrupt_gaussian(img, 0.0, 0.0, rng), img);
  EXPECT_THROW(data::corrupt_gaussian(img, 0.0, -1.0, rng), std::invalid_argument);
}

TEST(Corrupt, GaussianMeanShift) {
  const Tensor img({1, 128, 128}, 0.0);
  std::mt19937_64 rng(6);
  const auto [m, s] = mean_std(data::corrupt_gaussian(img, 0.3, 0.7, rng));
  EXPECT_NEAR(m, 0.3, 3.0 * 0.7 / 128.0);
  EXPECT_NEAR(s, 0.7, 0.02);
}

TEST(Corrupt, UnitKernelIsIdentityUpToNormalisation) {
  const Tensor img = data::normalize(data::generate(small_spec()).train[0].image);
  std::mt19937_64 rng(7);
  const Tensor out = data::corrupt_random_convolution(img, 1, rng);
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(out[i], img[i], 1e-9);
  EXPECT_THROW(data::corrupt_random_convolution(img, 4, rng), std::invalid_argument);
}

TEST(Corrupt, AveragingKernelKeepsRampInterior) {
  const std::size_t n = 16, k = 5;
  const Tensor img = ramp(n);
  std::mt19937_64 rng(8);
  Tensor kernel = oracle::random_tensor({k, k}, rng, 0.0, 1.0);
  // Symmetric, unit-sum kernels reproduce affine images away from the border.
  Tensor sym({k, k});
  double total = 0.0;
  for (std::size_t y = 0; y < k; ++y)
    for (std::size_t x = 0; x < k; ++x) total += sym[y * k + x] = kernel[y * k + x] + kernel[(k - 1 - y) * k + (k - 1 - x)];
  sym *= 1.0 / total;
  const Tensor out = data::convolve_reflect(img, sym);
  for (std::size_t y = k / 2; y < n - k / 2; ++y)
    for (std::size_t x = k / 2; x < n - k / 2; ++x) EXPECT_NEAR(out.at(0, y, x), img.at(0, y, x), 1e-9);
}

TEST(Io, TensorRoundTrip) {
  std::mt19937_64 rng(9);
  const Tensor t = oracle::random_tensor({2, 3, 4}, rng);
  std::stringstream buffer;
  data::write_tensor(buffer, t);
  EXPECT_EQ(data::read_tensor(buffer), t);
  std::stringstream bad("garbage");
  EXPECT_THROW(data::read_tensor(bad), std::runtime_error);
}

TEST(Io, DatasetRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "layerens_dataset_roundtrip";
  std::filesystem::remove_all(dir);
  const auto d = data::generate(small_spec(3));
  data::save_dataset(dir, d, 3, true);
  const auto back = data::load_dataset(dir, 3);
  ASSERT_EQ(back.test.size(), d.test.size());
  for (std::size_t i = 0; i < d.test.size(); ++i) {
    EXPECT_EQ(back.test[i].image, d.test[i].image);
    EXPECT_EQ(back.test[i].mask, d.test[i].mask);
    EXPECT_EQ(back.test[i].tags, d.test[i].tags);
  }
  const Tensor preview = data::read_pgm(dir / "train" / (d.train[0].id + ".pgm"));
  EXPECT_EQ(preview.shape(), d.train[0].image.shape());
  std::filesystem::remove_all(dir);
}
