#include "layerens/experiments/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "layerens/data/transforms.hpp"
#include "layerens/fusion/fusion.hpp"
#include "layerens/model/trainer.hpp"

namespace layerens::experiments {

std::string to_string(Corruption kind) {
  switch (kind) {
    case Corruption::gaussian: return "gaussian";
    case Corruption::random_convolution: return "random_convolution";
  }
  return "unknown";
}

Corruption parse_corruption(const std::string& text) {
  if (text == "gaussian") return Corruption::gaussian;
  if (text == "random_convolution") return Corruption::random_convolution;
  throw std::invalid_argument("unknown corruption '" + text + "' (expected gaussian or random_convolution)");
}

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers. The first exception
// is rethrown after all workers stop.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::vector<double> column(std::span<const ImageEvaluation> evals, double (*get)(const ImageEvaluation&)) {
  std::vector<double> out;
  out.reserve(evals.size());
  for (const auto& e : evals) out.push_back(get(e));
  return out;
}

double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) area += 0.5 * (y[i] + y[i + 1]) * (x[i + 1] - x[i]);
  return area;
}

}  // namespace

std::vector<model::HeadOutputs> infer(const model::Network& network, std::span<const nn::Tensor> images,
                                      std::size_t threads) {
  std::vector<model::HeadOutputs> out(images.size());
  parallel_for(images.size(), threads, [&](std::size_t i) { out[i] = network.forward_all_heads(images[i]); });
  return out;
}

std::vector<model::HeadOutputs> infer(const model::Network& network, std::span<const data::Sample> samples,
                                      std::size_t threads) {
  std::vector<model::HeadOutputs> out(samples.size());
  parallel_for(samples.size(), threads,
               [&](std::size_t i) { out[i] = network.forward_all_heads(model::prepare_input(samples[i])); });
  return out;
}

ImageEvaluation evaluate_image(const data::Sample& sample, const model::HeadOutputs& heads,
                               const ExperimentSettings& settings) {
  ImageEvaluation e;
  e.id = sample.id;
  e.tags = sample.tags;
  const std::size_t N = heads.num_heads();
  if (settings.skip + 1 == N) {
    // Plain baseline: the last head alone. Its maps are those of an ensemble
    // of two identical copies; there is no agreement curve.
    const nn::Tensor& last = heads.probs.back();
    e.metrics = metrics::evaluate(heads.label(N - 1), last, sample.mask, settings.spacing);
    e.report = uncertainty::build_report(model::HeadOutputs{{last, last}}, 0, settings.agreement_threshold);
    e.report.curve.agreements.clear();
    e.report.curve.skip = settings.skip;
    e.report.prediction_depth = settings.skip;
  } else {
    const auto staple = fusion::staple_fuse_heads(heads, settings.skip);
    const auto averaged = fusion::average_fuse(heads, settings.skip);
    e.metrics = metrics::evaluate(staple.label, averaged.prob, sample.mask, settings.spacing);
    e.report = uncertainty::build_report(heads, settings.skip, settings.agreement_threshold);
  }
  e.report.variance_map = nn::Tensor();
  e.report.entropy_map = nn::Tensor();
  e.report.mi_map = nn::Tensor();
  return e;
}

std::vector<ImageEvaluation> evaluate_images(std::span<const data::Sample> samples,
                                             std::span<const model::HeadOutputs> heads,
                                             const ExperimentSettings& settings) {
  if (samples.size() != heads.size()) throw std::invalid_argument("evaluate_images: one head set per sample needed");
  std::vector<ImageEvaluation> out(samples.size());
  parallel_for(samples.size(), settings.threads,
               [&](std::size_t i) { out[i] = evaluate_image(samples[i], heads[i], settings); });
  return out;
}

QcCurve qc_curve(std::span<const double> uncertainties, std::span<const double> dscs, double poor_threshold,
                 std::size_t grid_points) {
  if (uncertainties.size() != dscs.size()) throw std::invalid_argument("qc_curve: length mismatch");
  if (uncertainties.empty()) throw std::invalid_argument("qc_curve: no images");
  if (grid_points < 2) throw std::invalid_argument("qc_curve: need at least two grid points");
  const std::size_t n = dscs.size();
  QcCurve curve;
  curve.poor_threshold = poor_threshold;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return uncertainties[a] > uncertainties[b]; });
  std::vector<std::size_t> poor_before(n + 1, 0);  // poor images among the first m flagged
  for (std::size_t m = 0; m < n; ++m) poor_before[m + 1] = poor_before[m] + (dscs[order[m]] < poor_threshold);
  const std::size_t poor = poor_before[n];
  curve.poor_count = poor;
  curve.no_poor_cases = poor == 0;

  const std::size_t steps = grid_points - 1;
  for (std::size_t i = 0; i < grid_points; ++i) {
    const double f = static_cast<double>(i) / static_cast<double>(steps);
    const std::size_t flagged = (i * n + steps - 1) / steps;  // ceil(f * n) in integers
    curve.fractions.push_back(f);
    curve.random.push_back(1.0 - f);
    if (curve.no_poor_cases) {
      curve.remaining.push_back(0.0);
      curve.ideal.push_back(0.0);
    } else {
      const double P = static_cast<double>(poor);
      curve.remaining.push_back(static_cast<double>(poor - poor_before[flagged]) / P);
      curve.ideal.push_back(static_cast<double>(poor - std::min(poor, flagged)) / P);
    }
  }
  curve.auc = trapezoid(curve.fractions, curve.remaining);
  curve.random_auc = trapezoid(curve.fractions, curve.random);
  curve.ideal_auc = trapezoid(curve.fractions, curve.ideal);
  return curve;
}

std::vector<CorrelationRow> correlation_table(std::span<const ImageEvaluation> evaluations) {
  if (evaluations.size() < 3) throw std::invalid_argument("correlation_table: need at least three images");
  struct Named {
    const char* name;
    double (*get)(const ImageEvaluation&);
  };
  const Named uncertainties[] = {
      {"entropy_sum", [](const ImageEvaluation& e) { return e.report.entropy_sum; }},
      {"mi_sum", [](const ImageEvaluation& e) { return e.report.mi_sum; }},
      {"variance_sum", [](const ImageEvaluation& e) { return e.report.variance_sum; }},
      {"aula", [](const ImageEvaluation& e) { return e.report.aula; }},
  };
  std::vector<CorrelationRow> rows;
  const auto dsc = column(evaluations, [](const ImageEvaluation& e) { return e.metrics.dsc; });
  for (const auto& u : uncertainties) {
    const auto values = column(evaluations, u.get);
    rows.push_back({u.name, "dsc", metrics::spearman(values, dsc), values.size()});

    std::vector<double> x, mhd;
    for (std::size_t i = 0; i < evaluations.size(); ++i) {
      if (!evaluations[i].metrics.mhd) continue;
      x.push_back(values[i]);
      mhd.push_back(*evaluations[i].metrics.mhd);
    }
    CorrelationRow row{u.name, "mhd", std::nullopt, x.size()};
    if (x.size() >= 3) row.rho = metrics::spearman(x, mhd);
    rows.push_back(row);
  }
  return rows;
}

std::vector<SweepRow> calibration_sweep(std::span<const data::Sample> samples,
                                        std::span<const model::HeadOutputs> heads) {
  if (samples.size() != heads.size() || samples.empty()) {
    throw std::invalid_argument("calibration_sweep: need one head set per sample");
  }
  const std::size_t N = heads.front().num_heads();
  if (N < 2) throw std::invalid_argument("calibration_sweep: need at least two heads");
  std::vector<SweepRow> rows;
  for (std::size_t skip = 0; skip < N; ++skip) {
    std::vector<double> nlls, dscs;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      nn::Tensor prob;
      LabelMask label;
      if (skip + 1 == N) {
        prob = heads[i].probs.back();
        label = labels_from_probabilities(prob);
      } else {
        auto fused = fusion::average_fuse(heads[i], skip);
        prob = std::move(fused.prob);
        label = std::move(fused.label);
      }
      const auto record = metrics::evaluate(label, prob, samples[i].mask);
      nlls.push_back(record.nll);
      dscs.push_back(record.dsc);
    }
    rows.push_back({skip, skip + 1 == N, metrics::summarize(nlls), metrics::summarize(dscs)});
  }
  return rows;
}

std::vector<std::size_t> corrupted_subset(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("corruption fraction must be in [0,1]");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = data::derived_stream(seed, 300, 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto count = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  order.resize(std::min(count, n));
  std::sort(order.begin(), order.end());
  return order;
}

nn::Tensor corrupt(const nn::Tensor& normalized, std::size_t index, const ExperimentSettings& settings) {
  auto rng = data::derived_stream(settings.seed, 400, index);
  switch (settings.corruption) {
    case Corruption::gaussian: return data::corrupt_gaussian(normalized, settings.noise_mean, settings.noise_std, rng);
    case Corruption::random_convolution:
      return data::corrupt_random_convolution(normalized, settings.random_conv_kernel, rng);
  }
  return normalized;
}

std::vector<PdHistogram> pd_shift(const model::Network& network, std::span<const data::Sample> samples,
                                  const ExperimentSettings& settings) {
  const std::size_t N = network.config().num_heads();
  std::vector<nn::Tensor> clean;
  clean.reserve(samples.size());
  for (const auto& s : samples) clean.push_back(model::prepare_input(s));

  std::vector<PdHistogram> out;
  for (double fraction : settings.corruption_fractions) {
    const auto subset = corrupted_subset(samples.size(), fraction, settings.seed);
    std::vector<nn::Tensor> inputs = clean;
    for (std::size_t i : subset) inputs[i] = corrupt(clean[i], i, settings);
    const auto heads = infer(network, inputs, settings.threads);
    PdHistogram h;
    h.fraction = fraction;
    h.corrupted = subset.size();
    h.counts.assign(N, 0);
    double total = 0.0;
    for (const auto& head_set : heads) {
      const auto curve = uncertainty::layer_agreement_curve(head_set, settings.skip, settings.agreement_threshold);
      const std::size_t pd = uncertainty::prediction_depth(curve);
      ++h.counts.at(pd);
      total += static_cast<double>(pd);
    }
    h.mean = samples.empty() ? 0.0 : total / static_cast<double>(samples.size());
    out.push_back(std::move(h));
  }
  return out;
}

SummaryTable summary_table(std::span<const ImageEvaluation> evaluations) {
  SummaryTable t;
  std::vector<double> dsc, mhd, nll;
  std::size_t classes = evaluations.empty() ? 0 : evaluations.front().metrics.class_dsc.size();
  std::vector<std::vector<double>> class_dsc(classes), class_mhd(classes);
  t.class_mhd_undefined.assign(classes, 0);
  for (const auto& e : evaluations) {
    dsc.push_back(e.metrics.dsc);
    nll.push_back(e.metrics.nll);
    if (e.metrics.mhd) {
      mhd.push_back(*e.metrics.mhd);
    } else {
      ++t.mhd_undefined;
    }
    if (e.metrics.class_dsc.size() != classes) throw std::invalid_argument("summary_table: class counts differ");
    for (std::size_t c = 0; c < classes; ++c) {
      class_dsc[c].push_back(e.metrics.class_dsc[c]);
      if (e.metrics.class_mhd[c]) {
        class_mhd[c].push_back(*e.metrics.class_mhd[c]);
      } else {
        ++t.class_mhd_undefined[c];
      }
    }
  }
  t.dsc = metrics::summarize(dsc);
  t.mhd = metrics::summarize(mhd);
  t.nll = metrics::summarize(nll);
  for (std::size_t c = 0; c < classes; ++c) {
    t.class_dsc.push_back(metrics::summarize(class_dsc[c]));
    t.class_mhd.push_back(metrics::summarize(class_mhd[c]));
  }
  return t;
}

}  // namespace layerens::experiments
