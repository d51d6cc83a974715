#include "layerens/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace layerens::metrics {

namespace {

void require_same(const LabelMask& a, const LabelMask& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": masks " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                     " and " + std::to_string(b.height()) + "x" + std::to_string(b.width()) + " differ");
  }
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// Exact squared distance transform along one line (lower envelope of
// parabolas), sample positions step * i.
void edt_line(const double* f, std::size_t n, std::size_t stride, double step, double* out, std::vector<double>& buf_f,
              std::vector<std::size_t>& v, std::vector<double>& z) {
  buf_f.resize(n);
  for (std::size_t i = 0; i < n; ++i) buf_f[i] = f[i * stride];
  v.clear();
  z.clear();
  // Abscissa where the parabolas rooted at samples r and q cross.
  auto cross = [&](std::size_t r, std::size_t q) {
    const double xr = step * static_cast<double>(r), xq = step * static_cast<double>(q);
    return ((buf_f[q] + xq * xq) - (buf_f[r] + xr * xr)) / (2.0 * (xq - xr));
  };
  for (std::size_t q = 0; q < n; ++q) {
    if (buf_f[q] == kInf) continue;
    while (!v.empty() && cross(v.back(), q) <= z.back()) {
      v.pop_back();
      z.pop_back();
    }
    z.push_back(v.empty() ? -kInf : cross(v.back(), q));
    v.push_back(q);
  }
  if (v.empty()) {
    for (std::size_t i = 0; i < n; ++i) out[i * stride] = kInf;
    return;
  }
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = step * static_cast<double>(i);
    while (k + 1 < v.size() && z[k + 1] < x) ++k;
    const double d = x - step * static_cast<double>(v[k]);
    out[i * stride] = d * d + buf_f[v[k]];
  }
}

// Squared Euclidean distance from every pixel to the nearest site.
std::vector<double> squared_distance_to(const std::vector<std::size_t>& sites, std::size_t H, std::size_t W,
                                        Spacing spacing) {
  std::vector<double> grid(H * W, kInf), tmp(H * W);
  for (std::size_t s : sites) grid[s] = 0.0;
  std::vector<double> buf;
  std::vector<std::size_t> v;
  std::vector<double> z;
  for (std::size_t x = 0; x < W; ++x) edt_line(grid.data() + x, H, W, spacing.y, tmp.data() + x, buf, v, z);
  for (std::size_t y = 0; y < H; ++y) edt_line(tmp.data() + y * W, W, 1, spacing.x, grid.data() + y * W, buf, v, z);
  return grid;
}

double mean_directed(const std::vector<std::size_t>& from, const std::vector<double>& squared_to) {
  double total = 0.0;
  for (std::size_t s : from) total += std::sqrt(squared_to[s]);
  return total / static_cast<double>(from.size());
}

}  // namespace

double dice(const LabelMask& a, const LabelMask& b, std::int32_t label) {
  require_same(a, b, "dice");
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool in_a = a[i] == label, in_b = b[i] == label;
    na += in_a;
    nb += in_b;
    both += in_a && in_b;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

std::vector<std::size_t> boundary_pixels(const LabelMask& mask, std::int32_t label) {
  const std::size_t H = mask.height(), W = mask.width();
  std::vector<std::size_t> out;
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      if (mask(y, x) != label) continue;
      const bool edge = y == 0 || x == 0 || y + 1 == H || x + 1 == W || mask(y - 1, x) != label ||
                        mask(y + 1, x) != label || mask(y, x - 1) != label || mask(y, x + 1) != label;
      if (edge) out.push_back(y * W + x);
    }
  }
  return out;
}

std::optional<double> mhd(const LabelMask& a, const LabelMask& b, std::int32_t label, Spacing spacing) {
  require_same(a, b, "mhd");
  if (!(spacing.y > 0.0 && spacing.x > 0.0)) throw std::invalid_argument("mhd: spacing must be positive");
  const auto ba = boundary_pixels(a, label), bb = boundary_pixels(b, label);
  if (ba.empty() || bb.empty()) return std::nullopt;
  const std::size_t H = a.height(), W = a.width();
  const double ab = mean_directed(ba, squared_distance_to(bb, H, W, spacing));
  const double ba_dist = mean_directed(bb, squared_distance_to(ba, H, W, spacing));
  return std::max(ab, ba_dist);
}

double nll(const nn::Tensor& prob, const LabelMask& target) {
  if (prob.rank() != 3 || prob.dim(1) != target.height() || prob.dim(2) != target.width()) {
    throw ShapeError("nll: probability map " + nn::to_string(prob.shape()) + " does not match the target");
  }
  const std::size_t channels = prob.dim(0), pixels = target.size();
  if (channels != output_channels(target.num_classes())) {
    throw ShapeError("nll: " + std::to_string(channels) + " channels for " + std::to_string(target.num_classes()) +
                     " classes");
  }
  constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
  double total = 0.0;
  for (std::size_t i = 0; i < pixels; ++i) {
    const std::int32_t t = target[i];
    double p;
    if (channels == 1) {
      p = t != 0 ? prob[i] : 1.0 - prob[i];
    } else {
      p = prob[static_cast<std::size_t>(t) * pixels + i];
    }
    total -= std::log(std::clamp(p, lo, hi));
  }
  return total / static_cast<double>(pixels);
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(n);
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start + 1;
    while (end < n && values[order[end]] == values[order[start]]) ++end;
    const double rank = 0.5 * static_cast<double>(start + end + 1);  // mean of positions start+1 .. end
    for (std::size_t k = start; k < end; ++k) ranks[order[k]] = rank;
    start = end;
  }
  return ranks;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman: sequences differ in length");
  if (x.size() < 3) throw std::invalid_argument("spearman: need at least three pairs");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::isnan(x[i]) || std::isnan(y[i])) throw std::invalid_argument("spearman: NaN input");
  }
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

MetricRecord evaluate(const LabelMask& prediction, const nn::Tensor& prob, const LabelMask& target, Spacing spacing) {
  require_same(prediction, target, "evaluate");
  MetricRecord r;
  const int K = target.num_classes();
  double mhd_total = 0.0;
  std::size_t mhd_defined = 0;
  for (std::int32_t c = 1; c <= K; ++c) {
    r.class_dsc.push_back(dice(prediction, target, c));
    r.class_mhd.push_back(mhd(prediction, target, c, spacing));
    if (r.class_mhd.back()) {
      mhd_total += *r.class_mhd.back();
      ++mhd_defined;
    }
  }
  r.dsc = std::accumulate(r.class_dsc.begin(), r.class_dsc.end(), 0.0) / static_cast<double>(K);
  if (mhd_defined > 0) r.mhd = mhd_total / static_cast<double>(mhd_defined);
  r.nll = nll(prob, target);
  return r;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / n);
  return s;
}

}  // namespace layerens::metrics
