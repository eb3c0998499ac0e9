#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "seq2gmm/dataio.hpp"
#include "seq2gmm/trainer.hpp"

namespace seq2gmm {

enum class ExperimentKind { Benchmark, Contamination, Deletion, Ablation, Synthetic };

ExperimentKind experiment_kind_from_string(const std::string& text);
std::string to_string(ExperimentKind kind);

struct DataConfig {
  std::string source = "synthetic";  ///< "synthetic" or "ucr"
  std::string name = "synthetic";    ///< UCR dataset name, e.g. TwoLeadECG
  std::string ucr_dir;               ///< falls back to $SEQ2GMM_UCR_DIR
  std::string train_path;            ///< explicit files override <ucr_dir>/<name>/<name>_TRAIN.tsv
  std::string test_path;
  int normal_class = 0;  ///< 0 picks the most frequent class of the training file
  bool normalize = true;
  int anomaly_count = 0;  ///< anomalies injected into the training set
  SynthConfig synth;
};

struct ExperimentConfig {
  DataConfig data;
  TrainingConfig train;
  std::string aggregation = "max";
  double shapelet_quantile = 0.95;
  bool augment = false;
  std::vector<double> augment_fractions{0.05, 0.10};
  int augment_copies = 1;

  ExperimentKind kind = ExperimentKind::Benchmark;
  int runs = 5;
  int threads = 0;  ///< parallel runs; 0 uses the hardware concurrency
  std::vector<double> contamination_fractions{0.0, 0.05, 0.10};  ///< of the normal training count
  std::vector<double> deletion_ratios{1.0, 0.95, 0.90};          ///< kept test length
  std::vector<int> segment_counts{1, 2, 3, 4};
  std::string results_dir = "results";
};

/// Dotted names of every setting, e.g. "train.lambda".
const std::vector<std::string>& config_keys();

/// Applies one "section.key" = value setting. Throws ConfigError for unknown keys or bad values.
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);

/// INI-style file with [data], [model], [train], [experiment] sections. '#' and ';' start comments.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text);

/// SEQ2GMM_SEED overrides train.seed; SEQ2GMM_UCR_DIR fills data.ucr_dir when unset.
void apply_environment(ExperimentConfig& config);

void validate_experiment(const ExperimentConfig& config);

void to_json(nlohmann::json& j, const ExperimentConfig& config);

}  // namespace seq2gmm
