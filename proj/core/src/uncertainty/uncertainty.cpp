#include "layerens/uncertainty/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "common/format.hpp"
#include "layerens/metrics/metrics.hpp"

namespace layerens::uncertainty {

namespace {

double clamped_log(double p) { return std::log(std::clamp(p, kLogClamp, 1.0 - kLogClamp)); }

// Entropy of the probability vector at pixel i of a [K',H,W] map.
double entropy_at(const double* probs, std::size_t channels, std::size_t pixels, std::size_t i) {
  if (channels == 1) {
    const double p = probs[i];
    return -(p * clamped_log(p) + (1.0 - p) * clamped_log(1.0 - p));
  }
  double h = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    const double p = probs[c * pixels + i];
    h -= p * clamped_log(p);
  }
  return h;
}

struct Geometry {
  std::size_t channels, height, width, pixels;
};

Geometry checked(const model::HeadOutputs& outputs, std::size_t skip) {
  model::require_valid_skip(outputs, skip);
  for (const auto& p : outputs.probs) {
    if (p.rank() != 3 || p.shape() != outputs.probs.front().shape()) {
      throw ShapeError("head outputs must share one [K',H,W] shape");
    }
  }
  return {outputs.channels(), outputs.height(), outputs.width(), outputs.height() * outputs.width()};
}

nn::Tensor mean_map(const model::HeadOutputs& outputs, std::size_t skip) {
  // Averaged as offsets from the first head so that agreeing heads give
  // their common value exactly.
  const nn::Tensor& first = outputs.probs[skip];
  nn::Tensor offset(first.shape(), 0.0);
  for (std::size_t h = skip + 1; h < outputs.num_heads(); ++h) {
    for (std::size_t i = 0; i < offset.size(); ++i) offset[i] += outputs.probs[h][i] - first[i];
  }
  nn::Tensor mean = first;
  const double inv = 1.0 / static_cast<double>(outputs.num_heads() - skip);
  for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += offset[i] * inv;
  return mean;
}

}  // namespace

nn::Tensor pixel_variance(const model::HeadOutputs& outputs, std::size_t skip) {
  const Geometry g = checked(outputs, skip);
  const nn::Tensor mean = mean_map(outputs, skip);
  const double heads = static_cast<double>(outputs.num_heads() - skip);
  nn::Tensor out({g.height, g.width}, 0.0);
  for (std::size_t h = skip; h < outputs.num_heads(); ++h) {
    const nn::Tensor& p = outputs.probs[h];
    for (std::size_t c = 0; c < g.channels; ++c) {
      for (std::size_t i = 0; i < g.pixels; ++i) {
        const double d = p[c * g.pixels + i] - mean[c * g.pixels + i];
        out[i] += d * d;
      }
    }
  }
  out *= 1.0 / (heads * static_cast<double>(g.channels));
  return out;
}

nn::Tensor pixel_entropy(const model::HeadOutputs& outputs, std::size_t skip) {
  const Geometry g = checked(outputs, skip);
  const nn::Tensor mean = mean_map(outputs, skip);
  nn::Tensor out({g.height, g.width});
  for (std::size_t i = 0; i < g.pixels; ++i) out[i] = entropy_at(mean.data(), g.channels, g.pixels, i);
  return out;
}

nn::Tensor pixel_mutual_information(const model::HeadOutputs& outputs, std::size_t skip) {
  const Geometry g = checked(outputs, skip);
  nn::Tensor out = pixel_entropy(outputs, skip);
  const double heads = static_cast<double>(outputs.num_heads() - skip);
  for (std::size_t i = 0; i < g.pixels; ++i) {
    double expected = 0.0;
    for (std::size_t h = skip; h < outputs.num_heads(); ++h) {
      expected += entropy_at(outputs.probs[h].data(), g.channels, g.pixels, i);
    }
    out[i] = std::max(0.0, out[i] - expected / heads);
  }
  return out;
}

LayerAgreementCurve layer_agreement_curve(const model::HeadOutputs& outputs, std::size_t skip, double threshold) {
  checked(outputs, skip);
  if (!(threshold > 0.0 && threshold <= 1.0)) throw std::invalid_argument("agreement threshold must be in (0,1]");
  LayerAgreementCurve curve;
  curve.skip = skip;
  curve.threshold = threshold;
  const int K = outputs.num_classes();
  LabelMask previous = outputs.label(skip);
  for (std::size_t h = skip + 1; h < outputs.num_heads(); ++h) {
    LabelMask current = outputs.label(h);
    double total = 0.0;
    for (std::int32_t c = 1; c <= K; ++c) total += metrics::dice(previous, current, c);
    curve.agreements.push_back(total / static_cast<double>(K));
    previous = std::move(current);
  }
  return curve;
}

double aula(const LayerAgreementCurve& curve) {
  const auto& a = curve.agreements;
  if (a.size() < 2) throw std::invalid_argument("aula: the agreement curve needs at least two points");
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < a.size(); ++i) area += 0.5 * (a[i] + a[i + 1]);
  return area / static_cast<double>(a.size() - 1);
}

std::size_t prediction_depth(const LayerAgreementCurve& curve) {
  for (std::size_t i = curve.agreements.size(); i-- > 0;) {
    if (curve.agreements[i] < curve.threshold) return curve.skip + i + 1;
  }
  return curve.skip;
}

UncertaintyReport build_report(const model::HeadOutputs& outputs, std::size_t skip, double threshold) {
  UncertaintyReport r;
  r.variance_map = pixel_variance(outputs, skip);
  r.entropy_map = pixel_entropy(outputs, skip);
  r.mi_map = pixel_mutual_information(outputs, skip);
  r.variance_sum = r.variance_map.sum();
  r.entropy_sum = r.entropy_map.sum();
  r.mi_sum = r.mi_map.sum();
  r.curve = layer_agreement_curve(outputs, skip, threshold);
  r.aula = r.curve.agreements.size() < 2 ? std::numeric_limits<double>::quiet_NaN() : aula(r.curve);
  r.prediction_depth = prediction_depth(r.curve);
  return r;
}

std::string report_csv_header() { return "id,variance_sum,entropy_sum,mi_sum,aula,prediction_depth,agreements"; }

std::string report_csv_row(const std::string& id, const UncertaintyReport& report) {
  std::string agreements;
  for (double a : report.curve.agreements) {
    if (!agreements.empty()) agreements += ';';
    agreements += detail::format_double(a);
  }
  return id + ',' + detail::format_double(report.variance_sum) + ',' + detail::format_double(report.entropy_sum) + ',' +
         detail::format_double(report.mi_sum) + ',' + detail::format_double(report.aula) + ',' +
         std::to_string(report.prediction_depth) + ',' + agreements;
}

std::string report_json(const UncertaintyReport& report) {
  nlohmann::ordered_json j;
  j["variance_sum"] = report.variance_sum;
  j["entropy_sum"] = report.entropy_sum;
  j["mi_sum"] = report.mi_sum;
  j["aula"] = report.aula;
  j["prediction_depth"] = report.prediction_depth;
  j["skip"] = report.curve.skip;
  j["threshold"] = report.curve.threshold;
  j["agreements"] = report.curve.agreements;
  return j.dump(2);
}

}  // namespace layerens::uncertainty
