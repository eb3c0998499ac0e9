#include "seq2gmm/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/lexical_cast.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "seq2gmm/errors.hpp"

namespace seq2gmm {

namespace {

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  try {
    return boost::lexical_cast<T>(text);
  } catch (const boost::bad_lexical_cast&) {
    throw ConfigError("invalid value '" + text + "' for " + key);
  }
}

template <>
bool parse_value<bool>(const std::string& key, const std::string& text) {
  std::string t = boost::algorithm::to_lower_copy(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError("invalid boolean '" + text + "' for " + key);
}

template <typename T>
std::vector<T> parse_list(const std::string& key, std::string text) {
  boost::algorithm::trim(text);
  if (!text.empty() && text.front() == '[' && text.back() == ']') text = text.substr(1, text.size() - 2);
  std::vector<std::string> parts;
  boost::algorithm::split(parts, text, boost::is_any_of(","));
  std::vector<T> out;
  for (auto& p : parts) {
    boost::algorithm::trim(p);
    if (!p.empty()) out.push_back(parse_value<T>(key, p));
  }
  return out;
}

std::string unquote(std::string text) {
  boost::algorithm::trim(text);
  if (text.size() >= 2 && (text.front() == '"' || text.front() == '\'') && text.back() == text.front()) {
    return text.substr(1, text.size() - 2);
  }
  return text;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

template <typename T, typename Get>
Setter scalar(Get get) {
  return [get](ExperimentConfig& c, const std::string& key, const std::string& v) { get(c) = parse_value<T>(key, v); };
}

template <typename T, typename Get>
Setter list(Get get) {
  return [get](ExperimentConfig& c, const std::string& key, const std::string& v) { get(c) = parse_list<T>(key, v); };
}

const std::map<std::string, Setter>& setters() {
  using C = ExperimentConfig;
  static const std::map<std::string, Setter> table = {
      {"data.source", scalar<std::string>([](C& c) -> auto& { return c.data.source; })},
      {"data.name", scalar<std::string>([](C& c) -> auto& { return c.data.name; })},
      {"data.ucr_dir", scalar<std::string>([](C& c) -> auto& { return c.data.ucr_dir; })},
      {"data.train", scalar<std::string>([](C& c) -> auto& { return c.data.train_path; })},
      {"data.test", scalar<std::string>([](C& c) -> auto& { return c.data.test_path; })},
      {"data.normal_class", scalar<int>([](C& c) -> auto& { return c.data.normal_class; })},
      {"data.normalize", scalar<bool>([](C& c) -> auto& { return c.data.normalize; })},
      {"data.anomaly_count", scalar<int>([](C& c) -> auto& { return c.data.anomaly_count; })},
      {"data.period", scalar<int>([](C& c) -> auto& { return c.data.synth.period_length; })},
      {"data.num_normal", scalar<int>([](C& c) -> auto& { return c.data.synth.num_normal; })},
      {"data.num_anomalous", scalar<int>([](C& c) -> auto& { return c.data.synth.num_anomalous; })},
      {"data.max_shift", scalar<int>([](C& c) -> auto& { return c.data.synth.max_shift; })},
      {"data.anomaly_offset", scalar<int>([](C& c) -> auto& { return c.data.synth.anomaly_offset; })},
      {"data.anomaly_length", scalar<int>([](C& c) -> auto& { return c.data.synth.anomaly_length; })},
      {"data.anomaly_amplitude", scalar<double>([](C& c) -> auto& { return c.data.synth.anomaly_amplitude; })},
      {"data.synth_seed", scalar<std::uint64_t>([](C& c) -> auto& { return c.data.synth.seed; })},
      {"model.hidden", scalar<int>([](C& c) -> auto& { return c.train.hidden; })},
      {"model.estimator_width", scalar<int>([](C& c) -> auto& { return c.train.estimator_width; })},
      {"model.K", scalar<int>([](C& c) -> auto& { return c.train.K; })},
      {"model.k_candidates", list<int>([](C& c) -> auto& { return c.train.k_candidates; })},
      {"model.num_segments", scalar<int>([](C& c) -> auto& { return c.train.num_segments; })},
      {"model.max_segments", scalar<int>([](C& c) -> auto& { return c.train.max_segments; })},
      {"model.resample_len", scalar<int>([](C& c) -> auto& { return c.train.resample_len; })},
      {"model.eps", scalar<double>([](C& c) -> auto& { return c.train.eps; })},
      {"model.aggregation", scalar<std::string>([](C& c) -> auto& { return c.aggregation; })},
      {"model.shapelet_quantile", scalar<double>([](C& c) -> auto& { return c.shapelet_quantile; })},
      {"train.lambda", scalar<double>([](C& c) -> auto& { return c.train.lambda; })},
      {"train.rounds", scalar<int>([](C& c) -> auto& { return c.train.rounds; })},
      {"train.pretrain_epochs", scalar<int>([](C& c) -> auto& { return c.train.pretrain_epochs; })},
      {"train.eta0", scalar<double>([](C& c) -> auto& { return c.train.eta0; })},
      {"train.decay", scalar<double>([](C& c) -> auto& { return c.train.decay; })},
      {"train.batch_size", scalar<int>([](C& c) -> auto& { return c.train.batch_size; })},
      {"train.grad_clip", scalar<double>([](C& c) -> auto& { return c.train.grad_clip; })},
      {"train.pretrain_grad_clip", scalar<double>([](C& c) -> auto& { return c.train.pretrain_grad_clip; })},
      {"train.seed", scalar<std::uint64_t>([](C& c) -> auto& { return c.train.seed; })},
      {"train.em_max_iters", scalar<int>([](C& c) -> auto& { return c.train.em_max_iters; })},
      {"train.em_tol", scalar<double>([](C& c) -> auto& { return c.train.em_tol; })},
      {"train.validation_fraction", scalar<double>([](C& c) -> auto& { return c.train.validation_fraction; })},
      {"train.augment", scalar<bool>([](C& c) -> auto& { return c.augment; })},
      {"train.augment_fractions", list<double>([](C& c) -> auto& { return c.augment_fractions; })},
      {"train.augment_copies", scalar<int>([](C& c) -> auto& { return c.augment_copies; })},
      {"experiment.kind",
       [](C& c, const std::string&, const std::string& v) { c.kind = experiment_kind_from_string(v); }},
      {"experiment.runs", scalar<int>([](C& c) -> auto& { return c.runs; })},
      {"experiment.threads", scalar<int>([](C& c) -> auto& { return c.threads; })},
      {"experiment.contamination_fractions", list<double>([](C& c) -> auto& { return c.contamination_fractions; })},
      {"experiment.deletion_ratios", list<double>([](C& c) -> auto& { return c.deletion_ratios; })},
      {"experiment.segment_counts", list<int>([](C& c) -> auto& { return c.segment_counts; })},
      {"experiment.results_dir", scalar<std::string>([](C& c) -> auto& { return c.results_dir; })},
  };
  return table;
}

}  // namespace

ExperimentKind experiment_kind_from_string(const std::string& text) {
  if (text == "benchmark") return ExperimentKind::Benchmark;
  if (text == "contamination") return ExperimentKind::Contamination;
  if (text == "deletion") return ExperimentKind::Deletion;
  if (text == "ablation") return ExperimentKind::Ablation;
  if (text == "synthetic") return ExperimentKind::Synthetic;
  throw ConfigError("unknown experiment kind '" + text + "'");
}

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Benchmark: return "benchmark";
    case ExperimentKind::Contamination: return "contamination";
    case ExperimentKind::Deletion: return "deletion";
    case ExperimentKind::Ablation: return "ablation";
    case ExperimentKind::Synthetic: return "synthetic";
  }
  return "benchmark";
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [key, setter] : setters()) out.push_back(key);
    return out;
  }();
  return keys;
}

void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value) {
  auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError("unknown setting '" + key + "'");
  it->second(config, key, unquote(value));
}

ExperimentConfig parse_config(const std::string& text) {
  // Drop inline comments, e.g. "lambda = 0.1  # weight".
  std::ostringstream cleaned;
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    cleaned << line << '\n';
  }
  boost::property_tree::ptree tree;
  std::istringstream in(cleaned.str());
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  ExperimentConfig config;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("setting '" + section + "' outside a section");
    for (const auto& [key, value] : body) apply_setting(config, section + "." + key, value.data());
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

void apply_environment(ExperimentConfig& config) {
  if (const char* seed = std::getenv("SEQ2GMM_SEED"); seed && *seed) apply_setting(config, "train.seed", seed);
  if (config.data.ucr_dir.empty()) {
    if (const char* dir = std::getenv("SEQ2GMM_UCR_DIR"); dir && *dir) config.data.ucr_dir = dir;
  }
}

void validate_experiment(const ExperimentConfig& c) {
  validate_config(c.train);
  if (c.data.source != "synthetic" && c.data.source != "ucr") {
    throw ConfigError("data.source must be synthetic or ucr");
  }
  if (c.data.anomaly_count < 0) throw ConfigError("data.anomaly_count must be >= 0");
  if (c.aggregation != "max" && c.aggregation != "mean") throw ConfigError("model.aggregation must be max or mean");
  if (!(c.shapelet_quantile > 0.0 && c.shapelet_quantile < 1.0)) {
    throw ConfigError("model.shapelet_quantile must lie in (0, 1)");
  }
  if (c.runs < 1) throw ConfigError("experiment.runs must be >= 1");
  if (c.augment && (c.augment_fractions.empty() || c.augment_copies < 1)) {
    throw ConfigError("augmentation needs fractions and at least one copy");
  }
  for (double f : c.augment_fractions) {
    if (!(f >= 0.0 && f < 1.0)) throw ConfigError("augmentation fractions must lie in [0, 1)");
  }
  switch (c.kind) {
    case ExperimentKind::Contamination:
      if (c.contamination_fractions.empty()) throw ConfigError("contamination needs experiment.contamination_fractions");
      for (double f : c.contamination_fractions) {
        if (!(f >= 0.0)) throw ConfigError("contamination fractions must be >= 0");
      }
      break;
    case ExperimentKind::Deletion:
      if (c.deletion_ratios.empty()) throw ConfigError("deletion needs experiment.deletion_ratios");
      for (double r : c.deletion_ratios) {
        if (!(r > 0.0 && r <= 1.0)) throw ConfigError("deletion ratios must lie in (0, 1]");
      }
      break;
    case ExperimentKind::Ablation:
      if (c.segment_counts.empty()) throw ConfigError("ablation needs experiment.segment_counts");
      for (int m : c.segment_counts) {
        if (m < 1) throw ConfigError("segment counts must be >= 1");
      }
      break;
    default:
      break;
  }
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"data",
        {{"source", c.data.source},
         {"name", c.data.name},
         {"ucr_dir", c.data.ucr_dir},
         {"train", c.data.train_path},
         {"test", c.data.test_path},
         {"normal_class", c.data.normal_class},
         {"normalize", c.data.normalize},
         {"anomaly_count", c.data.anomaly_count},
         {"period", c.data.synth.period_length},
         {"num_normal", c.data.synth.num_normal},
         {"num_anomalous", c.data.synth.num_anomalous},
         {"max_shift", c.data.synth.max_shift},
         {"anomaly_offset", c.data.synth.anomaly_offset},
         {"anomaly_length", c.data.synth.anomaly_length},
         {"anomaly_amplitude", c.data.synth.anomaly_amplitude},
         {"synth_seed", c.data.synth.seed}}},
       {"train", c.train},
       {"aggregation", c.aggregation},
       {"shapelet_quantile", c.shapelet_quantile},
       {"augment", c.augment},
       {"augment_fractions", c.augment_fractions},
       {"augment_copies", c.augment_copies},
       {"experiment",
        {{"kind", to_string(c.kind)},
         {"runs", c.runs},
         {"contamination_fractions", c.contamination_fractions},
         {"deletion_ratios", c.deletion_ratios},
         {"segment_counts", c.segment_counts},
         {"results_dir", c.results_dir}}}};
}

}  // namespace seq2gmm
