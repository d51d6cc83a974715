#include "layerens/cli/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "common/format.hpp"
#include "layerens/error.hpp"

namespace layerens::cli {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_integer(const std::string& key, const std::string& text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  if (text.empty() || res.ec != std::errc() || res.ptr != end) {
    throw ConfigError(key, "expected an integer, got '" + text + "'");
  }
  return value;
}

double parse_real(const std::string& key, const std::string& text) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  if (text.empty() || res.ec != std::errc() || res.ptr != end) {
    throw ConfigError(key, "expected a number, got '" + text + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw ConfigError(key, "expected true or false, got '" + text + "'");
}

std::vector<double> parse_reals(const std::string& key, const std::string& text) {
  std::vector<double> out;
  if (trim(text).empty()) return out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_real(key, trim(item)));
  return out;
}

std::string format_reals(const std::vector<double>& values) {
  std::string out;
  for (double v : values) {
    if (!out.empty()) out += ',';
    out += detail::format_double(v);
  }
  return out;
}

std::string format_bool(bool b) { return b ? "true" : "false"; }

struct Field {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
};

// Accessor pairs for the common value kinds.
template <typename T>
Field size_field(const char* key, T RunConfig::*section, std::size_t T::*member) {
  return {key, [=](const RunConfig& c) { return std::to_string(c.*section.*member); },
          [=](RunConfig& c, const std::string& k, const std::string& v) {
            c.*section.*member = parse_integer<std::size_t>(k, v);
          }};
}

template <typename T>
Field real_field(const char* key, T RunConfig::*section, double T::*member) {
  return {key, [=](const RunConfig& c) { return detail::format_double(c.*section.*member); },
          [=](RunConfig& c, const std::string& k, const std::string& v) { c.*section.*member = parse_real(k, v); }};
}

template <typename T>
Field bool_field(const char* key, T RunConfig::*section, bool T::*member) {
  return {key, [=](const RunConfig& c) { return format_bool(c.*section.*member); },
          [=](RunConfig& c, const std::string& k, const std::string& v) { c.*section.*member = parse_bool(k, v); }};
}

const std::vector<Field>& fields() {
  using data::DatasetSpec;
  using experiments::ExperimentSettings;
  using model::ModelConfig;
  using model::TrainOptions;
  static const std::vector<Field> table = {
      {"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
       [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_integer<std::uint64_t>(k, v); }},
      {"output_dir", [](const RunConfig& c) { return c.output_dir.generic_string(); },
       [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = v; }},
      {"threads", [](const RunConfig& c) { return std::to_string(c.threads); },
       [](RunConfig& c, const std::string& k, const std::string& v) { c.threads = parse_integer<std::size_t>(k, v); }},
      {"data.write_pgm", [](const RunConfig& c) { return format_bool(c.write_pgm); },
       [](RunConfig& c, const std::string& k, const std::string& v) { c.write_pgm = parse_bool(k, v); }},

      size_field("data.train_count", &RunConfig::data, &DatasetSpec::train_count),
      size_field("data.val_count", &RunConfig::data, &DatasetSpec::val_count),
      size_field("data.test_count", &RunConfig::data, &DatasetSpec::test_count),
      size_field("data.image_size", &RunConfig::data, &DatasetSpec::image_size),
      {"data.num_classes", [](const RunConfig& c) { return std::to_string(c.data.num_classes); },
       [](RunConfig& c, const std::string& k, const std::string& v) { c.data.num_classes = parse_integer<int>(k, v); }},
      real_field("data.contrast_min", &RunConfig::data, &DatasetSpec::contrast_min),
      real_field("data.contrast_max", &RunConfig::data, &DatasetSpec::contrast_max),
      real_field("data.low_contrast_min", &RunConfig::data, &DatasetSpec::low_contrast_min),
      real_field("data.low_contrast_max", &RunConfig::data, &DatasetSpec::low_contrast_max),
      real_field("data.low_contrast_fraction", &RunConfig::data, &DatasetSpec::low_contrast_fraction),
      real_field("data.noise_std", &RunConfig::data, &DatasetSpec::noise_std),

      size_field("model.depth", &RunConfig::model, &ModelConfig::depth),
      size_field("model.base_channels", &RunConfig::model, &ModelConfig::base_channels),
      bool_field("model.stem_downsample", &RunConfig::model, &ModelConfig::stem_downsample),
      {"model.loss", [](const RunConfig& c) { return model::to_string(c.model.loss); },
       [](RunConfig& c, const std::string&, const std::string& v) { c.model.loss = model::parse_loss_kind(v); }},
      {"model.ce_weights", [](const RunConfig& c) { return format_reals(c.model.ce_weights); },
       [](RunConfig& c, const std::string& k, const std::string& v) { c.model.ce_weights = parse_reals(k, v); }},

      size_field("train.epochs", &RunConfig::train, &TrainOptions::epochs),
      size_field("train.batch_size", &RunConfig::train, &TrainOptions::batch_size),
      real_field("train.learning_rate", &RunConfig::train, &TrainOptions::learning_rate),
      {"train.lr_decay", [](const RunConfig& c) { return detail::format_double(c.train.plateau.factor); },
       [](RunConfig& c, const std::string& k, const std::string& v) { c.train.plateau.factor = parse_real(k, v); }},
      {"train.patience", [](const RunConfig& c) { return std::to_string(c.train.plateau.patience); },
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.train.plateau.patience = parse_integer<std::size_t>(k, v);
       }},
      {"train.min_delta", [](const RunConfig& c) { return detail::format_double(c.train.plateau.min_delta); },
       [](RunConfig& c, const std::string& k, const std::string& v) { c.train.plateau.min_delta = parse_real(k, v); }},
      {"train.min_learning_rate",
       [](const RunConfig& c) { return detail::format_double(c.train.plateau.min_learning_rate); },
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.train.plateau.min_learning_rate = parse_real(k, v);
       }},
      bool_field("train.augment", &RunConfig::train, &TrainOptions::augment),

      size_field("eval.skip", &RunConfig::experiment, &ExperimentSettings::skip),
      real_field("eval.agreement_threshold", &RunConfig::experiment, &ExperimentSettings::agreement_threshold),
      {"eval.spacing", [](const RunConfig& c) {
         return format_reals({c.experiment.spacing.y, c.experiment.spacing.x});
       },
       [](RunConfig& c, const std::string& k, const std::string& v) {
         const auto s = parse_reals(k, v);
         if (s.size() != 2) throw ConfigError(k, "expected 'y,x'");
         c.experiment.spacing = {s[0], s[1]};
       }},
      real_field("qc.poor_threshold", &RunConfig::experiment, &ExperimentSettings::poor_threshold),
      size_field("qc.grid_points", &RunConfig::experiment, &ExperimentSettings::qc_grid_points),
      {"pd.corruption", [](const RunConfig& c) { return experiments::to_string(c.experiment.corruption); },
       [](RunConfig& c, const std::string& k, const std::string& v) {
         try {
           c.experiment.corruption = experiments::parse_corruption(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError(k, e.what());
         }
       }},
      real_field("pd.noise_mean", &RunConfig::experiment, &ExperimentSettings::noise_mean),
      real_field("pd.noise_std", &RunConfig::experiment, &ExperimentSettings::noise_std),
      size_field("pd.kernel_size", &RunConfig::experiment, &ExperimentSettings::random_conv_kernel),
      {"pd.fractions", [](const RunConfig& c) { return format_reals(c.experiment.corruption_fractions); },
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.experiment.corruption_fractions = parse_reals(k, v);
       }},
  };
  return table;
}

}  // namespace

data::DatasetSpec RunConfig::dataset_spec() const {
  data::DatasetSpec d = data;
  d.seed = seed;
  return d;
}

model::ModelConfig RunConfig::model_config() const {
  model::ModelConfig m = model;
  m.num_classes = data.num_classes;
  m.height = m.width = data.image_size;
  m.seed = seed;
  return m;
}

model::TrainOptions RunConfig::train_options() const {
  model::TrainOptions t = train;
  t.seed = seed;
  return t;
}

experiments::ExperimentSettings RunConfig::experiment_settings() const {
  experiments::ExperimentSettings e = experiment;
  e.seed = seed;
  e.threads = threads;
  return e;
}

void RunConfig::validate() const {
  if (output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
  if (threads == 0) throw ConfigError("threads", "must be >= 1");
  dataset_spec().validate();
  if (data.val_count == 0) throw ConfigError("data.val_count", "training needs a validation split");
  if (data.test_count < 3) throw ConfigError("data.test_count", "experiments need at least 3 test images");
  const auto m = model_config();
  m.validate();
  if (train.epochs == 0) throw ConfigError("train.epochs", "must be >= 1");
  if (train.batch_size == 0) throw ConfigError("train.batch_size", "must be >= 1");
  if (!(train.learning_rate > 0.0)) throw ConfigError("train.learning_rate", "must be positive");
  if (!(train.plateau.factor > 0.0 && train.plateau.factor <= 1.0)) {
    throw ConfigError("train.lr_decay", "must be in (0,1]");
  }
  if (!(train.plateau.min_delta >= 0.0)) throw ConfigError("train.min_delta", "must be non-negative");
  if (!(train.plateau.min_learning_rate >= 0.0)) throw ConfigError("train.min_learning_rate", "must be non-negative");
  const std::size_t N = m.num_heads();
  if (experiment.skip >= N) {
    throw ConfigError("eval.skip", "must be below the head count " + std::to_string(N));
  }
  if (!(experiment.agreement_threshold > 0.0 && experiment.agreement_threshold <= 1.0)) {
    throw ConfigError("eval.agreement_threshold", "must be in (0,1]");
  }
  if (!(experiment.spacing.y > 0.0 && experiment.spacing.x > 0.0)) throw ConfigError("eval.spacing", "must be positive");
  if (!(experiment.poor_threshold > 0.0 && experiment.poor_threshold <= 1.0)) {
    throw ConfigError("qc.poor_threshold", "must be in (0,1]");
  }
  if (experiment.qc_grid_points < 2) throw ConfigError("qc.grid_points", "must be >= 2");
  if (!(experiment.noise_std >= 0.0)) throw ConfigError("pd.noise_std", "must be non-negative");
  if (experiment.random_conv_kernel % 2 == 0) throw ConfigError("pd.kernel_size", "must be odd");
  if (experiment.random_conv_kernel / 2 >= data.image_size) {
    throw ConfigError("pd.kernel_size", "must be smaller than twice the image size");
  }
  if (experiment.corruption_fractions.empty()) throw ConfigError("pd.fractions", "must list at least one fraction");
  for (double f : experiment.corruption_fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("pd.fractions", "fractions must be in [0,1]");
  }
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no), "expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool known = false;
    for (const auto& f : fields()) {
      if (key == f.key) {
        f.set(config, key, value);
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError(key, "unknown key");
  }
  return config;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot read config file '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.emplace_back(f.key);
  return out;
}

}  // namespace layerens::cli
