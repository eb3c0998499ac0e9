#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace seq2gmm {

enum class Label { Normal, Anomaly };

std::string to_string(Label label);
Label label_from_string(const std::string& text);

/// One univariate sequence. Lengths vary across a dataset.
struct TimeSeries {
  std::string id;
  std::vector<double> values;
  std::optional<Label> label;
  std::optional<int> source_class;

  std::size_t size() const { return values.size(); }
  bool is_anomaly() const { return label && *label == Label::Anomaly; }
};

/// A bundle of series sharing one normal class.
struct Dataset {
  std::string name;
  std::vector<TimeSeries> series;
  int normal_class = 1;

  std::size_t size() const { return series.size(); }
  std::size_t count(Label label) const;
};

struct SynthConfig {
  int period_length = 100;
  int num_normal = 60;
  int num_anomalous = 10;
  int max_shift = 20;
  int anomaly_offset = 40;  ///< 0-based first sample of the injected span
  int anomaly_length = 15;
  double anomaly_amplitude = 1.5;
  std::uint64_t seed = 1;
};

/// Throws ArgumentError unless length >= 4 and every value is finite.
void validate_series(const TimeSeries& series);
void validate_dataset(const Dataset& dataset);

/// Rows of a label-first delimited file (tab or comma, detected per file). Labels are left unset.
std::vector<TimeSeries> read_ucr_file(const std::filesystem::path& path);

/// Most frequent source class; ties go to the smallest class id.
int major_class(const std::vector<TimeSeries>& rows);

/// Relabels rows: `normal_class` becomes Normal, everything else Anomaly.
Dataset label_rows(std::string name, std::vector<TimeSeries> rows, int normal_class);

Dataset load_ucr_dataset(const std::filesystem::path& path, int normal_class);

/// Writes the dataset back in label-first tab-separated form.
void write_ucr_file(const std::filesystem::path& path, const Dataset& dataset);

struct BenchmarkSplit {
  Dataset train;
  Dataset test;
};

/// train = every Normal series plus `anomaly_count` randomly drawn anomalies; test = the rest.
BenchmarkSplit build_benchmark(const Dataset& dataset, std::size_t anomaly_count, std::uint64_t seed);

TimeSeries znormalize(const TimeSeries& series);
Dataset znormalize(const Dataset& dataset);

/// One period of sin(2*pi*i/period).
std::vector<double> sine_period(int period_length);

/// out[i] = values[(i - shift) mod n]
std::vector<double> cyclic_shift(const std::vector<double>& values, int shift);

Dataset synthesize_dataset(const SynthConfig& config);

/// Number of samples removed for a drop fraction, rounded half up.
std::size_t deletion_count(std::size_t length, double drop_fraction);

TimeSeries apply_type2_deletion(const TimeSeries& series, double drop_fraction, std::uint64_t seed);

Dataset augment_training_set(const Dataset& train, const std::vector<double>& fractions,
                             int copies_per_fraction, std::uint64_t seed);

void to_json(nlohmann::json& j, const TimeSeries& series);
void from_json(const nlohmann::json& j, TimeSeries& series);
void to_json(nlohmann::json& j, const Dataset& dataset);
void from_json(const nlohmann::json& j, Dataset& dataset);

}  // namespace seq2gmm
