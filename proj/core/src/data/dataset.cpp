#include "layerens/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "layerens/error.hpp"

namespace layerens::data {

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "unknown";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + text + "'");
}

void DatasetSpec::validate() const {
  if (image_size < 16) throw ConfigError("data.image_size", "must be >= 16");
  if (num_classes != 1 && num_classes != 3) throw ConfigError("data.num_classes", "synthetic families exist for 1 and 3");
  if (train_count == 0) throw ConfigError("data.train_count", "must be positive");
  if (!(contrast_min > 0.0 && contrast_min <= contrast_max)) throw ConfigError("data.contrast_min", "need 0 < min <= max");
  if (!(low_contrast_min >= 0.0 && low_contrast_min <= low_contrast_max)) {
    throw ConfigError("data.low_contrast_min", "need 0 <= min <= max");
  }
  if (!(low_contrast_fraction >= 0.0 && low_contrast_fraction <= 1.0)) {
    throw ConfigError("data.low_contrast_fraction", "must be in [0,1]");
  }
  if (!(noise_std >= 0.0)) throw ConfigError("data.noise_std", "must be non-negative");
}

const std::vector<Sample>& Dataset::split(Split s) const {
  switch (s) {
    case Split::train: return train;
    case Split::val: return val;
    case Split::test: return test;
  }
  return test;
}

std::mt19937_64 derived_stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// Smooth low-frequency background: base level plus a few random plane waves.
std::vector<double> background(std::size_t size, std::mt19937_64& rng) {
  std::vector<double> bg(size * size, 0.3);
  const double two_pi = 2.0 * std::numbers::pi;
  for (int wave = 0; wave < 3; ++wave) {
    const double amp = uniform(rng, 0.02, 0.06);
    const double fx = uniform(rng, -3.0, 3.0), fy = uniform(rng, -3.0, 3.0);
    const double phase = uniform(rng, 0.0, two_pi);
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        bg[y * size + x] += amp * std::sin(two_pi * (fx * x + fy * y) / static_cast<double>(size) + phase);
      }
    }
  }
  return bg;
}

// Ellipse in normalised radius units: r <= 1 inside.
struct Ellipse {
  double cy, cx, a, b, angle;

  double radius(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    const double u = dx * std::cos(angle) + dy * std::sin(angle);
    const double v = -dx * std::sin(angle) + dy * std::cos(angle);
    return std::sqrt((u / a) * (u / a) + (v / b) * (v / b));
  }
  // Soft inside indicator with an edge about one pixel wide.
  double coverage(double y, double x) const {
    const double r = radius(y, x);
    return std::clamp(0.5 + (1.0 - r) * std::min(a, b), 0.0, 1.0);
  }
};

void render_lesion(const DatasetSpec& spec, double contrast, std::mt19937_64& rng, std::vector<double>& pixels,
                   LabelMask& mask) {
  const double S = static_cast<double>(spec.image_size);
  const double jitter = S / 16.0;
  Ellipse e{S / 2.0 + uniform(rng, -jitter, jitter), S / 2.0 + uniform(rng, -jitter, jitter),
            uniform(rng, 0.12, 0.28) * S, uniform(rng, 0.12, 0.28) * S, uniform(rng, 0.0, std::numbers::pi)};
  const double texture_amp = uniform(rng, 0.0, 0.3) * contrast;
  const double tf = uniform(rng, 0.2, 0.5);
  for (std::size_t y = 0; y < spec.image_size; ++y) {
    for (std::size_t x = 0; x < spec.image_size; ++x) {
      const double cy = static_cast<double>(y) + 0.5, cx = static_cast<double>(x) + 0.5;
      const double inner = contrast + texture_amp * std::sin(tf * cx) * std::cos(tf * cy);
      pixels[y * spec.image_size + x] += inner * e.coverage(cy, cx);
      mask(y, x) = e.radius(cy, cx) <= 1.0 ? 1 : 0;
    }
  }
}

void render_cardiac(const DatasetSpec& spec, double contrast, std::mt19937_64& rng, std::vector<double>& pixels,
                    LabelMask& mask) {
  const double S = static_cast<double>(spec.image_size);
  const double jitter = S / 20.0;
  const double cy = S / 2.0 + uniform(rng, -jitter, jitter), cx = S / 2.0 + uniform(rng, -jitter, jitter);
  const double r_inner = uniform(rng, 0.08, 0.13) * S;
  const double r_outer = r_inner + uniform(rng, 0.04, 0.07) * S;
  const double rv_a = uniform(rng, 0.10, 0.16) * S, rv_b = uniform(rng, 0.06, 0.10) * S;
  const double theta = uniform(rng, 0.75, 1.25) * std::numbers::pi;
  const double reach = r_outer + 0.5 * rv_b;
  Ellipse rv{cy + reach * std::sin(theta), cx + reach * std::cos(theta), rv_a, rv_b, theta + std::numbers::pi / 2.0};
  Ellipse lv{cy, cx, r_inner, r_inner, 0.0};
  Ellipse myo{cy, cx, r_outer, r_outer, 0.0};
  for (std::size_t y = 0; y < spec.image_size; ++y) {
    for (std::size_t x = 0; x < spec.image_size; ++x) {
      const double py = static_cast<double>(y) + 0.5, px = static_cast<double>(x) + 0.5;
      // Paint back to front so the three structures stay disjoint.
      std::int32_t label = 0;
      if (rv.radius(py, px) <= 1.0) label = 3;
      if (myo.radius(py, px) <= 1.0) label = 2;
      if (lv.radius(py, px) <= 1.0) label = 1;
      mask(y, x) = label;
      const double lv_cov = lv.coverage(py, px);
      const double myo_cov = myo.coverage(py, px) - lv_cov;
      const double rv_cov = std::max(0.0, rv.coverage(py, px) - myo.coverage(py, px));
      pixels[y * spec.image_size + x] += contrast * (1.0 * lv_cov - 0.5 * myo_cov + 0.8 * rv_cov);
    }
  }
}

}  // namespace

Sample generate_sample(const DatasetSpec& spec, Split split, std::size_t index) {
  auto rng = derived_stream(spec.seed, 1 + static_cast<std::uint64_t>(split), index);
  const bool low_contrast = uniform(rng, 0.0, 1.0) < spec.low_contrast_fraction;
  const double contrast = low_contrast ? uniform(rng, spec.low_contrast_min, spec.low_contrast_max)
                                       : uniform(rng, spec.contrast_min, spec.contrast_max);
  std::vector<double> pixels = background(spec.image_size, rng);
  LabelMask mask(spec.image_size, spec.image_size, spec.num_classes);
  if (spec.num_classes == 1) {
    render_lesion(spec, contrast, rng, pixels, mask);
  } else {
    render_cardiac(spec, contrast, rng, pixels, mask);
  }
  std::normal_distribution<double> noise(0.0, spec.noise_std);
  if (spec.noise_std > 0.0) {
    for (double& v : pixels) v += noise(rng);
  }

  Sample sample;
  sample.image = nn::Tensor({1, spec.image_size, spec.image_size}, std::move(pixels));
  sample.mask = std::move(mask);
  char id[32];
  std::snprintf(id, sizeof id, "%s_%05zu", to_string(split).c_str(), index);
  sample.id = id;
  if (low_contrast) sample.tags.insert("low-contrast");
  return sample;
}

Dataset generate(const DatasetSpec& spec) {
  spec.validate();
  Dataset ds;
  auto fill = [&](std::vector<Sample>& out, Split split, std::size_t count) {
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(generate_sample(spec, split, i));
  };
  fill(ds.train, Split::train, spec.train_count);
  fill(ds.val, Split::val, spec.val_count);
  fill(ds.test, Split::test, spec.test_count);
  return ds;
}

}  // namespace layerens::data
