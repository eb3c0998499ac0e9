#include "seq2gmm/dataio.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "seq2gmm/errors.hpp"
#include "seq2gmm/random.hpp"

namespace seq2gmm {

std::string to_string(Label label) { return label == Label::Normal ? "normal" : "anomaly"; }

Label label_from_string(const std::string& text) {
  if (text == "normal") return Label::Normal;
  if (text == "anomaly") return Label::Anomaly;
  throw ArgumentError("unknown label '" + text + "'");
}

std::size_t Dataset::count(Label label) const {
  return static_cast<std::size_t>(std::count_if(series.begin(), series.end(), [&](const TimeSeries& s) {
    return s.label && *s.label == label;
  }));
}

void validate_series(const TimeSeries& series) {
  if (series.values.size() < 4) {
    throw ArgumentError("series '" + series.id + "' has length " + std::to_string(series.values.size()) +
                        ", need at least 4");
  }
  for (double v : series.values) {
    if (!std::isfinite(v)) throw ArgumentError("series '" + series.id + "' contains a non-finite value");
  }
}

void validate_dataset(const Dataset& dataset) {
  if (dataset.series.empty()) throw ArgumentError("dataset '" + dataset.name + "' is empty");
  std::set<std::string> ids;
  for (const auto& s : dataset.series) {
    validate_series(s);
    if (!ids.insert(s.id).second) throw ArgumentError("duplicate series id '" + s.id + "'");
  }
}

namespace {

std::string trim(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

char detect_delimiter(const std::string& line) {
  if (line.find('\t') != std::string::npos) return '\t';
  if (line.find(',') != std::string::npos) return ',';
  return ' ';
}

std::vector<std::string> split_fields(const std::string& line, char delimiter) {
  std::vector<std::string> fields;
  if (delimiter == ' ') {
    std::istringstream in(line);
    std::string token;
    while (in >> token) fields.push_back(token);
    return fields;
  }
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, delimiter)) fields.push_back(trim(field));
  if (!line.empty() && line.back() == delimiter) fields.emplace_back();
  return fields;
}

bool parse_double(const std::string& token, double& out) {
  if (token.empty()) return false;
  const char* begin = token.c_str();
  char* end = nullptr;
  errno = 0;
  out = std::strtod(begin, &end);
  return end == begin + token.size() && errno != ERANGE;
}

bool is_nan_token(const std::string& token) {
  std::string lower = token;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  return lower == "nan";
}

}  // namespace

std::vector<TimeSeries> read_ucr_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open dataset file '" + path.string() + "'");

  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();

  char delimiter = 0;
  std::vector<TimeSeries> rows;
  const std::string stem = path.stem().string();
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::size_t line_no = n + 1;
    const std::string line = trim(lines[n]);
    if (line.empty()) throw ParseError("empty row", line_no);
    if (delimiter == 0) delimiter = detect_delimiter(line);

    auto fields = split_fields(line, delimiter);
    // Trailing empty fields and NaN padding mark the end of a shorter row.
    while (!fields.empty() && (fields.back().empty() || is_nan_token(fields.back()))) fields.pop_back();
    if (fields.empty()) throw ParseError("empty row", line_no);

    double label = 0.0;
    if (!parse_double(fields[0], label) || label != std::floor(label)) {
      throw ParseError("class label '" + fields[0] + "' is not an integer", line_no);
    }
    TimeSeries series;
    series.id = stem + ":" + std::to_string(rows.size());
    series.source_class = static_cast<int>(label);
    series.values.reserve(fields.size() - 1);
    for (std::size_t f = 1; f < fields.size(); ++f) {
      double v = 0.0;
      if (!parse_double(fields[f], v) || !std::isfinite(v)) {
        throw ParseError("non-numeric token '" + fields[f] + "' in field " + std::to_string(f + 1), line_no);
      }
      series.values.push_back(v);
    }
    if (series.values.empty()) throw ParseError("row has a label but no samples", line_no);
    rows.push_back(std::move(series));
  }
  return rows;
}

int major_class(const std::vector<TimeSeries>& rows) {
  std::map<int, std::size_t> counts;
  for (const auto& r : rows) {
    if (r.source_class) ++counts[*r.source_class];
  }
  if (counts.empty()) throw ConfigError("no labelled rows to pick a major class from");
  auto best = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return best->first;
}

Dataset label_rows(std::string name, std::vector<TimeSeries> rows, int normal_class) {
  bool known = std::any_of(rows.begin(), rows.end(),
                           [&](const TimeSeries& r) { return r.source_class == normal_class; });
  if (!known) throw ConfigError("normal class " + std::to_string(normal_class) + " does not occur in '" + name + "'");
  Dataset dataset;
  dataset.name = std::move(name);
  dataset.normal_class = normal_class;
  dataset.series = std::move(rows);
  for (auto& s : dataset.series) {
    s.label = (s.source_class == normal_class) ? Label::Normal : Label::Anomaly;
  }
  return dataset;
}

Dataset load_ucr_dataset(const std::filesystem::path& path, int normal_class) {
  return label_rows(path.stem().string(), read_ucr_file(path), normal_class);
}

void write_ucr_file(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write '" + path.string() + "'");
  out.precision(17);
  for (const auto& s : dataset.series) {
    int label = s.source_class.value_or(s.is_anomaly() ? dataset.normal_class + 1 : dataset.normal_class);
    out << label;
    for (double v : s.values) out << '\t' << v;
    out << '\n';
  }
}

BenchmarkSplit build_benchmark(const Dataset& dataset, std::size_t anomaly_count, std::uint64_t seed) {
  std::vector<std::size_t> normals;
  std::vector<std::size_t> anomalies;
  for (std::size_t i = 0; i < dataset.series.size(); ++i) {
    const auto& s = dataset.series[i];
    if (!s.label) throw ArgumentError("series '" + s.id + "' is unlabelled");
    (*s.label == Label::Normal ? normals : anomalies).push_back(i);
  }
  if (normals.empty()) throw ArgumentError("dataset '" + dataset.name + "' has no normal series");
  if (anomaly_count > anomalies.size()) {
    throw ArgumentError("requested " + std::to_string(anomaly_count) + " training anomalies but only " +
                        std::to_string(anomalies.size()) + " are available");
  }

  // Partial Fisher-Yates over the anomaly pool.
  Rng rng(seed);
  for (std::size_t i = 0; i < anomaly_count; ++i) {
    std::size_t j = i + uniform_index(rng, anomalies.size() - i);
    std::swap(anomalies[i], anomalies[j]);
  }
  std::vector<bool> in_train(dataset.series.size(), false);
  for (auto i : normals) in_train[i] = true;
  for (std::size_t i = 0; i < anomaly_count; ++i) in_train[anomalies[i]] = true;

  BenchmarkSplit split;
  split.train.name = dataset.name + "/train";
  split.test.name = dataset.name + "/test";
  split.train.normal_class = split.test.normal_class = dataset.normal_class;
  for (std::size_t i = 0; i < dataset.series.size(); ++i) {
    (in_train[i] ? split.train : split.test).series.push_back(dataset.series[i]);
  }
  return split;
}

TimeSeries znormalize(const TimeSeries& series) {
  if (series.values.size() < 2) throw ArgumentError("z-normalization needs at least 2 samples");
  const double n = static_cast<double>(series.values.size());
  const double mean = std::accumulate(series.values.begin(), series.values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : series.values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);

  TimeSeries out = series;
  for (double& v : out.values) v = sd > 1e-12 ? (v - mean) / sd : 0.0;
  return out;
}

Dataset znormalize(const Dataset& dataset) {
  Dataset out = dataset;
  for (auto& s : out.series) s = znormalize(s);
  return out;
}

std::vector<double> sine_period(int period_length) {
  std::vector<double> base(static_cast<std::size_t>(period_length));
  for (int i = 0; i < period_length; ++i) {
    base[static_cast<std::size_t>(i)] = std::sin(2.0 * std::numbers::pi * i / period_length);
  }
  return base;
}

std::vector<double> cyclic_shift(const std::vector<double>& values, int shift) {
  const auto n = static_cast<long>(values.size());
  std::vector<double> out(values.size());
  for (long i = 0; i < n; ++i) {
    long src = ((i - shift) % n + n) % n;
    out[static_cast<std::size_t>(i)] = values[static_cast<std::size_t>(src)];
  }
  return out;
}

Dataset synthesize_dataset(const SynthConfig& config) {
  if (config.period_length < 4 || config.num_normal < 1 || config.num_anomalous < 0 || config.max_shift < 0 ||
      config.max_shift >= config.period_length) {
    throw ArgumentError("invalid synthetic dataset configuration");
  }
  if (config.anomaly_offset < 0 || config.anomaly_length < 1 ||
      config.anomaly_offset + config.anomaly_length > config.period_length) {
    throw ArgumentError("anomaly span must lie inside the period");
  }

  const auto base = sine_period(config.period_length);
  Rng rng(config.seed);
  auto draw_shift = [&] {
    return static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(config.max_shift) + 1));
  };

  Dataset dataset;
  dataset.name = "synthetic-sine";
  dataset.normal_class = 1;
  for (int i = 0; i < config.num_normal; ++i) {
    TimeSeries s;
    s.id = "normal-" + std::to_string(i);
    s.values = cyclic_shift(base, draw_shift());
    s.label = Label::Normal;
    s.source_class = 1;
    dataset.series.push_back(std::move(s));
  }
  for (int i = 0; i < config.num_anomalous; ++i) {
    TimeSeries s;
    s.id = "anomaly-" + std::to_string(i);
    s.values = cyclic_shift(base, draw_shift());
    for (int t = config.anomaly_offset; t < config.anomaly_offset + config.anomaly_length; ++t) {
      s.values[static_cast<std::size_t>(t)] += config.anomaly_amplitude;
    }
    s.label = Label::Anomaly;
    s.source_class = 2;
    dataset.series.push_back(std::move(s));
  }
  return dataset;
}

std::size_t deletion_count(std::size_t length, double drop_fraction) {
  return static_cast<std::size_t>(std::floor(drop_fraction * static_cast<double>(length) + 0.5));
}

TimeSeries apply_type2_deletion(const TimeSeries& series, double drop_fraction, std::uint64_t seed) {
  if (!(drop_fraction >= 0.0 && drop_fraction < 1.0)) throw ArgumentError("drop fraction must lie in [0, 1)");
  const std::size_t n = series.values.size();
  const std::size_t drop = deletion_count(n, drop_fraction);
  if (n - drop < 4) {
    throw ArgumentError("deleting " + std::to_string(drop) + " of " + std::to_string(n) + " samples from '" +
                        series.id + "' leaves fewer than 4");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = 0; i < drop; ++i) {
    std::size_t j = i + uniform_index(rng, n - i);
    std::swap(order[i], order[j]);
  }
  std::vector<bool> removed(n, false);
  for (std::size_t i = 0; i < drop; ++i) removed[order[i]] = true;

  TimeSeries out = series;
  out.values.clear();
  out.values.reserve(n - drop);
  for (std::size_t i = 0; i < n; ++i) {
    if (!removed[i]) out.values.push_back(series.values[i]);
  }
  return out;
}

Dataset augment_training_set(const Dataset& train, const std::vector<double>& fractions, int copies_per_fraction,
                             std::uint64_t seed) {
  if (copies_per_fraction < 1) throw ArgumentError("copies_per_fraction must be positive");
  Dataset out = train;
  const std::size_t nf = fractions.size();
  const auto copies = static_cast<std::size_t>(copies_per_fraction);
  for (std::size_t i = 0; i < train.series.size(); ++i) {
    for (std::size_t f = 0; f < nf; ++f) {
      for (std::size_t c = 0; c < copies; ++c) {
        auto stream = (i * nf + f) * copies + c;
        TimeSeries copy = apply_type2_deletion(train.series[i], fractions[f], derive_seed(seed, stream));
        std::ostringstream id;
        id << train.series[i].id << "/del" << fractions[f] << "#" << c;
        copy.id = id.str();
        out.series.push_back(std::move(copy));
      }
    }
  }
  return out;
}

void to_json(nlohmann::json& j, const TimeSeries& series) {
  j = nlohmann::json{{"id", series.id}, {"values", series.values}};
  j["label"] = series.label ? nlohmann::json(to_string(*series.label)) : nlohmann::json(nullptr);
  j["source_class"] = series.source_class ? nlohmann::json(*series.source_class) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, TimeSeries& series) {
  series.id = j.at("id").get<std::string>();
  series.values = j.at("values").get<std::vector<double>>();
  series.label.reset();
  series.source_class.reset();
  if (j.contains("label") && !j["label"].is_null()) series.label = label_from_string(j["label"].get<std::string>());
  if (j.contains("source_class") && !j["source_class"].is_null()) series.source_class = j["source_class"].get<int>();
}

void to_json(nlohmann::json& j, const Dataset& dataset) {
  j = nlohmann::json{{"name", dataset.name}, {"normal_class", dataset.normal_class}, {"series", dataset.series}};
}

void from_json(const nlohmann::json& j, Dataset& dataset) {
  dataset.name = j.at("name").get<std::string>();
  dataset.normal_class = j.at("normal_class").get<int>();
  dataset.series = j.at("series").get<std::vector<TimeSeries>>();
}

}  // namespace seq2gmm
