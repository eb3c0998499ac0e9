#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "seq2gmm/config.hpp"
#include "seq2gmm/dataio.hpp"
#include "seq2gmm/metrics.hpp"
#include "seq2gmm/scoring.hpp"
#include "seq2gmm/trainer.hpp"

namespace seq2gmm {

/// Labeled train and test pools for one run, before anomaly injection.
struct Corpus {
  Dataset train_pool;
  Dataset test_pool;
};

/// UCR: <ucr_dir>/<name>/<name>_TRAIN.tsv and _TEST.tsv (or the explicit paths), relabeled by the
/// normal class. Synthetic: two independent draws of the generator seeded from `run_seed`.
Corpus load_corpus(const ExperimentConfig& config, std::uint64_t run_seed);

/// True when the UCR files for the configured dataset exist.
bool ucr_available(const ExperimentConfig& config);

/// Seed of run `index`.
std::uint64_t run_seed(const ExperimentConfig& config, int index);

/// Z-normalizes (if configured), trains and records the normalization in the model.
TrainingResult fit_model(const Dataset& train, const ExperimentConfig& config, std::uint64_t seed);

struct RunOutcome {
  int run = 0;
  std::uint64_t seed = 0;
  double auc = 0.0;
  double aupr = 0.0;
  std::size_t train_size = 0;
  std::size_t train_anomalies = 0;
  std::size_t test_size = 0;
  std::optional<double> localization_rate;  ///< synthetic data only
  std::vector<ScoreReport> reports;
  TrainingTrace trace;
  TrainedModel model;
  Dataset test;  ///< evaluation set as scored (after deletion)
};

struct RunSettings {
  int anomaly_count = 0;
  double keep_ratio = 1.0;  ///< fraction of test samples kept by type-2 deletion
  bool augment = false;
  int num_segments = -1;  ///< -1 keeps the configured value
};

/// One build_benchmark -> train -> score -> metrics pass.
RunOutcome run_single(const ExperimentConfig& config, int run_index, const RunSettings& settings);

/// All runs of one setting, in parallel; outcomes ordered by run index.
std::vector<RunOutcome> run_all(const ExperimentConfig& config, const RunSettings& settings);

MetricResult collect_metrics(const std::vector<RunOutcome>& outcomes);

/// Jaccard index of two 1-based inclusive spans.
double span_jaccard(std::pair<int, int> a, std::pair<int, int> b);

/// Share of anomalous reports whose top shapelet overlaps `truth` with Jaccard > 0.3.
double localization_rate(const std::vector<ScoreReport>& reports, std::pair<int, int> truth);

struct ResultRow {
  std::string setting;  ///< human-readable row label
  nlohmann::json knobs;
  MetricResult metrics;
  std::optional<double> relative_loss;  ///< (clean - this) / clean, contamination only
  std::optional<double> auc_drop;       ///< full-length AUC minus this AUC, deletion only
  std::vector<RunOutcome> outcomes;
};

struct ExperimentResult {
  ExperimentKind kind = ExperimentKind::Benchmark;
  std::string dataset;
  std::vector<ResultRow> rows;
};

ExperimentResult run_benchmark(const ExperimentConfig& config);
ExperimentResult run_synthetic(const ExperimentConfig& config);
ExperimentResult run_contamination(const ExperimentConfig& config);
ExperimentResult run_deletion(const ExperimentConfig& config);
ExperimentResult run_ablation_segments(const ExperimentConfig& config);
ExperimentResult run_experiment(const ExperimentConfig& config);

nlohmann::json results_json(const ExperimentResult& result, const ExperimentConfig& config);
std::string results_markdown(const ExperimentResult& result);

/// results.json, results.md, scores/*.jsonl, trace/*.json and latent/*.csv (first run of every row).
void write_results(const std::filesystem::path& dir, const ExperimentResult& result, const ExperimentConfig& config);

}  // namespace seq2gmm
