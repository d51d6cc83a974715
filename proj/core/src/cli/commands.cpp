#include "layerens/cli/commands.hpp"

#include <chrono>
#include <fstream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "common/format.hpp"
#include "layerens/data/io.hpp"
#include "layerens/error.hpp"
#include "layerens/model/network.hpp"

namespace layerens::cli {

namespace fs = std::filesystem;
using detail::format_double;
using json = nlohmann::ordered_json;

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void log_line(const CommandOptions& options, const std::string& line) {
  if (options.log) *options.log << line << std::endl;
}

std::ofstream open_output(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

json summary_header(const std::string& command, const RunConfig& config) {
  json j;
  j["command"] = command;
  j["seed"] = config.seed;
  j["config"] = config.to_text();
  return j;
}

std::string optional_text(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json summary_json(const metrics::Summary& s) { return json{{"mean", s.mean}, {"std", s.std}, {"count", s.count}}; }

std::string join_tags(const std::set<std::string>& tags) {
  std::string out;
  for (const auto& t : tags) {
    if (!out.empty()) out += ';';
    out += t;
  }
  return out;
}

// qc needs an AULA per image (two agreement points), pd a prediction depth (one).
void require_agreement_points(const RunConfig& config, std::size_t points, const std::string& command) {
  const std::size_t N = config.model_config().num_heads();
  if (config.experiment.skip + points + 1 > N) {
    throw ConfigError("eval.skip", command + " needs skip <= " + std::to_string(N - points - 1) + " with " +
                                       std::to_string(N) + " heads");
  }
}

model::Network load_network(const RunConfig& config, const CommandOptions& options) {
  const fs::path path = checkpoint_path(config, options);
  if (!fs::exists(path)) throw std::runtime_error("checkpoint not found: " + path.string());
  model::Network network(config.model_config());
  network.load(path);
  return network;
}

struct Evaluated {
  data::Dataset dataset;
  std::vector<model::HeadOutputs> heads;
};

Evaluated run_inference(const RunConfig& config, const CommandOptions& options, const model::Network& network) {
  Evaluated e{load_or_generate(config), {}};
  log_line(options, "inference on " + std::to_string(e.dataset.test.size()) + " test images");
  e.heads = experiments::infer(network, e.dataset.test, config.threads);
  return e;
}

}  // namespace

fs::path checkpoint_path(const RunConfig& config, const CommandOptions& options) {
  return options.checkpoint.empty() ? config.output_dir / "model.leckpt" : options.checkpoint;
}

data::Dataset load_or_generate(const RunConfig& config) {
  const fs::path dir = config.output_dir / "data";
  const auto spec = config.dataset_spec();
  if (!fs::exists(dir / "manifest.csv")) return data::generate(spec);
  data::Dataset ds = data::load_dataset(dir, spec.num_classes);
  auto check = [&](const char* key, std::size_t stored, std::size_t expected) {
    if (stored != expected) {
      throw ConfigError(key, "dataset in " + dir.string() + " has " + std::to_string(stored) + ", config says " +
                                 std::to_string(expected) + " (re-run generate)");
    }
  };
  check("data.train_count", ds.train.size(), spec.train_count);
  check("data.val_count", ds.val.size(), spec.val_count);
  check("data.test_count", ds.test.size(), spec.test_count);
  if (!ds.test.empty()) check("data.image_size", ds.test.front().image.dim(1), spec.image_size);
  return ds;
}

void cmd_generate(const RunConfig& config, const CommandOptions& options) {
  Stopwatch clock;
  const auto ds = data::generate(config.dataset_spec());
  const fs::path dir = config.output_dir / "data";
  data::save_dataset(dir, ds, config.data.num_classes, config.write_pgm);
  log_line(options, "wrote " + std::to_string(ds.train.size() + ds.val.size() + ds.test.size()) + " samples to " +
                        dir.string());
  json j = summary_header("generate", config);
  j["counts"] = {{"train", ds.train.size()}, {"val", ds.val.size()}, {"test", ds.test.size()}};
  std::size_t low = 0;
  for (const auto& s : ds.test) low += s.tags.count("low-contrast");
  j["test_low_contrast"] = low;
  j["timing_seconds"] = clock.seconds();
  write_text(config.output_dir / "generate_summary.json", j.dump(2) + "\n");
}

void cmd_train(const RunConfig& config, const CommandOptions& options) {
  Stopwatch clock;
  const auto ds = load_or_generate(config);
  model::Network network(config.model_config());
  std::ostringstream csv;
  csv << "epoch,train_loss,val_loss,learning_rate,improved\n";
  const auto log = model::train(network, ds.train, ds.val, config.train_options(), [&](const model::EpochRecord& r) {
    csv << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.val_loss) << ','
        << format_double(r.learning_rate) << ',' << (r.improved ? 1 : 0) << '\n';
    log_line(options, "epoch " + std::to_string(r.epoch) + " train " + format_double(r.train_loss) + " val " +
                          format_double(r.val_loss) + " lr " + format_double(r.learning_rate));
  });
  const fs::path ckpt = checkpoint_path(config, options);
  if (!ckpt.parent_path().empty()) fs::create_directories(ckpt.parent_path());
  network.save(ckpt);
  write_text(config.output_dir / "train_log.csv", csv.str());
  json j = summary_header("train", config);
  j["checkpoint"] = ckpt.generic_string();
  j["heads"] = network.num_heads();
  j["best_epoch"] = log.best_epoch;
  j["best_val_loss"] = log.best_val_loss;
  j["timing_seconds"] = clock.seconds();
  write_text(config.output_dir / "train_summary.json", j.dump(2) + "\n");
  log_line(options, "saved " + ckpt.string());
}

void cmd_eval(const RunConfig& config, const CommandOptions& options) {
  Stopwatch clock;
  const auto network = load_network(config, options);
  const auto settings = config.experiment_settings();
  const auto run = run_inference(config, options, network);
  const auto evals = experiments::evaluate_images(run.dataset.test, run.heads, settings);
  const int K = config.data.num_classes;

  std::ostringstream rows;
  rows << "id,tags,dsc,mhd,nll,variance_sum,entropy_sum,mi_sum,aula,prediction_depth";
  if (K > 1) {
    for (int c = 1; c <= K; ++c) rows << ",dsc_" << c << ",mhd_" << c;
  }
  rows << '\n';
  for (const auto& e : evals) {
    rows << e.id << ',' << join_tags(e.tags) << ',' << format_double(e.metrics.dsc) << ','
         << optional_text(e.metrics.mhd) << ',' << format_double(e.metrics.nll) << ','
         << format_double(e.report.variance_sum) << ',' << format_double(e.report.entropy_sum) << ','
         << format_double(e.report.mi_sum) << ',' << format_double(e.report.aula) << ',' << e.report.prediction_depth;
    if (K > 1) {
      for (int c = 0; c < K; ++c) {
        rows << ',' << format_double(e.metrics.class_dsc[c]) << ',' << optional_text(e.metrics.class_mhd[c]);
      }
    }
    rows << '\n';
  }
  write_text(config.output_dir / "eval_images.csv", rows.str());

  const auto table = experiments::summary_table(evals);
  std::ostringstream summary;
  summary << "metric,class,mean,std,count,undefined\n";
  auto line = [&](const std::string& name, const std::string& cls, const metrics::Summary& s, std::size_t undefined) {
    summary << name << ',' << cls << ',' << format_double(s.mean) << ',' << format_double(s.std) << ',' << s.count << ','
            << undefined << '\n';
  };
  line("dsc", "all", table.dsc, 0);
  line("mhd", "all", table.mhd, table.mhd_undefined);
  line("nll", "all", table.nll, 0);
  if (K > 1) {
    for (int c = 0; c < K; ++c) {
      line("dsc", std::to_string(c + 1), table.class_dsc[c], 0);
      line("mhd", std::to_string(c + 1), table.class_mhd[c], table.class_mhd_undefined[c]);
    }
  }
  write_text(config.output_dir / "eval_summary.csv", summary.str());

  json j = summary_header("eval", config);
  j["images"] = evals.size();
  j["dsc"] = summary_json(table.dsc);
  j["mhd"] = summary_json(table.mhd);
  j["mhd_undefined"] = table.mhd_undefined;
  j["nll"] = summary_json(table.nll);
  j["timing_seconds"] = clock.seconds();
  write_text(config.output_dir / "eval_summary.json", j.dump(2) + "\n");
  log_line(options, "test DSC " + format_double(table.dsc.mean) + " NLL " + format_double(table.nll.mean));
}

void cmd_qc(const RunConfig& config, const CommandOptions& options) {
  Stopwatch clock;
  require_agreement_points(config, 2, "qc");
  const auto network = load_network(config, options);
  const auto settings = config.experiment_settings();
  const auto run = run_inference(config, options, network);
  const auto evals = experiments::evaluate_images(run.dataset.test, run.heads, settings);

  std::vector<double> dsc;
  for (const auto& e : evals) dsc.push_back(e.metrics.dsc);
  struct Method {
    const char* name;
    std::vector<double> uncertainty;
  };
  std::vector<Method> methods{{"aula", {}}, {"entropy_sum", {}}, {"mi_sum", {}}, {"variance_sum", {}}};
  for (const auto& e : evals) {
    methods[0].uncertainty.push_back(-e.report.aula);  // high AULA means low uncertainty
    methods[1].uncertainty.push_back(e.report.entropy_sum);
    methods[2].uncertainty.push_back(e.report.mi_sum);
    methods[3].uncertainty.push_back(e.report.variance_sum);
  }
  std::vector<experiments::QcCurve> curves;
  for (const auto& m : methods) {
    curves.push_back(experiments::qc_curve(m.uncertainty, dsc, settings.poor_threshold, settings.qc_grid_points));
  }

  std::ostringstream csv;
  csv << "fraction";
  for (const auto& m : methods) csv << ',' << m.name;
  csv << ",random,ideal\n";
  for (std::size_t i = 0; i < curves.front().fractions.size(); ++i) {
    csv << format_double(curves.front().fractions[i]);
    for (const auto& c : curves) csv << ',' << format_double(c.remaining[i]);
    csv << ',' << format_double(curves.front().random[i]) << ',' << format_double(curves.front().ideal[i]) << '\n';
  }
  write_text(config.output_dir / "qc_curves.csv", csv.str());

  std::ostringstream corr;
  corr << "uncertainty,segmentation,rho,count\n";
  for (const auto& row : experiments::correlation_table(evals)) {
    corr << row.uncertainty << ',' << row.segmentation << ',' << optional_text(row.rho) << ',' << row.count << '\n';
  }
  write_text(config.output_dir / "qc_correlations.csv", corr.str());

  json j = summary_header("qc", config);
  j["poor_threshold"] = settings.poor_threshold;
  j["poor_count"] = curves.front().poor_count;
  j["no_poor_cases"] = curves.front().no_poor_cases;
  json aucs;
  for (std::size_t m = 0; m < methods.size(); ++m) aucs[methods[m].name] = curves[m].auc;
  aucs["random"] = curves.front().random_auc;
  aucs["ideal"] = curves.front().ideal_auc;
  j["auc"] = aucs;
  json rho = json::array();
  for (const auto& row : experiments::correlation_table(evals)) {
    rho.push_back({{"uncertainty", row.uncertainty}, {"segmentation", row.segmentation}, {"rho", optional_json(row.rho)}});
  }
  j["correlations"] = rho;
  j["timing_seconds"] = clock.seconds();
  write_text(config.output_dir / "qc_summary.json", j.dump(2) + "\n");
  if (curves.front().no_poor_cases) log_line(options, "warning: no test image is below the poor threshold");
  log_line(options, "QC AUC (aula) " + format_double(curves.front().auc));
}

void cmd_pd(const RunConfig& config, const CommandOptions& options) {
  Stopwatch clock;
  require_agreement_points(config, 1, "pd");
  const auto network = load_network(config, options);
  const auto settings = config.experiment_settings();
  const auto ds = load_or_generate(config);
  const auto histograms = experiments::pd_shift(network, ds.test, settings);

  std::ostringstream csv;
  csv << "fraction,prediction_depth,count\n";
  json means = json::array();
  for (const auto& h : histograms) {
    for (std::size_t pd = 0; pd < h.counts.size(); ++pd) {
      csv << format_double(h.fraction) << ',' << pd << ',' << h.counts[pd] << '\n';
    }
    means.push_back({{"fraction", h.fraction}, {"corrupted", h.corrupted}, {"mean_pd", h.mean}});
    log_line(options, "fraction " + format_double(h.fraction) + " mean PD " + format_double(h.mean));
  }
  write_text(config.output_dir / "pd_histograms.csv", csv.str());
  json j = summary_header("pd", config);
  j["corruption"] = experiments::to_string(settings.corruption);
  j["histograms"] = means;
  j["timing_seconds"] = clock.seconds();
  write_text(config.output_dir / "pd_summary.json", j.dump(2) + "\n");
}

void cmd_sweep_skip(const RunConfig& config, const CommandOptions& options) {
  Stopwatch clock;
  const auto network = load_network(config, options);
  const auto run = run_inference(config, options, network);
  const auto rows = experiments::calibration_sweep(run.dataset.test, run.heads);
  std::ostringstream csv;
  csv << "skip,plain,nll_mean,nll_std,dsc_mean,dsc_std\n";
  json arr = json::array();
  for (const auto& r : rows) {
    csv << r.skip << ',' << (r.plain ? 1 : 0) << ',' << format_double(r.nll.mean) << ',' << format_double(r.nll.std)
        << ',' << format_double(r.dsc.mean) << ',' << format_double(r.dsc.std) << '\n';
    arr.push_back({{"skip", r.skip}, {"plain", r.plain}, {"nll", summary_json(r.nll)}, {"dsc", summary_json(r.dsc)}});
  }
  write_text(config.output_dir / "sweep_skip.csv", csv.str());
  json j = summary_header("sweep-skip", config);
  j["rows"] = arr;
  j["timing_seconds"] = clock.seconds();
  write_text(config.output_dir / "sweep_summary.json", j.dump(2) + "\n");
}

}  // namespace layerens::cli
