#include "seq2gmm/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "seq2gmm/errors.hpp"
#include "seq2gmm/random.hpp"

namespace seq2gmm {

namespace {

std::filesystem::path ucr_file(const ExperimentConfig& c, const std::string& explicit_path, const char* suffix) {
  if (!explicit_path.empty()) return explicit_path;
  if (c.data.ucr_dir.empty()) throw ConfigError("no UCR directory (set data.ucr_dir or SEQ2GMM_UCR_DIR)");
  const auto dir = std::filesystem::path(c.data.ucr_dir) / c.data.name;
  for (const char* ext : {".tsv", ".txt"}) {
    auto candidate = dir / (c.data.name + suffix + ext);
    if (std::filesystem::exists(candidate)) return candidate;
  }
  return dir / (c.data.name + suffix + ".tsv");
}

Dataset with_name(Dataset d, std::string name) {
  d.name = std::move(name);
  return d;
}

std::string format_percent(double v) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << 100.0 * v;
  return out.str();
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::string slug(const std::string& text) {
  std::string out;
  for (char ch : text) out += std::isalnum(static_cast<unsigned char>(ch)) ? ch : '_';
  return out;
}

ResultRow make_row(std::string setting, nlohmann::json knobs, std::vector<RunOutcome> outcomes) {
  ResultRow row;
  row.setting = std::move(setting);
  row.knobs = std::move(knobs);
  row.metrics = collect_metrics(outcomes);
  row.outcomes = std::move(outcomes);
  return row;
}

}  // namespace

bool ucr_available(const ExperimentConfig& config) {
  try {
    return std::filesystem::exists(ucr_file(config, config.data.train_path, "_TRAIN")) &&
           std::filesystem::exists(ucr_file(config, config.data.test_path, "_TEST"));
  } catch (const ConfigError&) {
    return false;
  }
}

std::uint64_t run_seed(const ExperimentConfig& config, int index) {
  return derive_seed(config.train.seed, static_cast<std::uint64_t>(index));
}

Corpus load_corpus(const ExperimentConfig& config, std::uint64_t seed) {
  if (config.data.source == "synthetic") {
    SynthConfig train_cfg = config.data.synth;
    train_cfg.seed = derive_seed(seed, 11);
    SynthConfig test_cfg = config.data.synth;
    test_cfg.seed = derive_seed(seed, 12);
    return {with_name(synthesize_dataset(train_cfg), "synthetic-train"),
            with_name(synthesize_dataset(test_cfg), "synthetic-test")};
  }
  const auto train_path = ucr_file(config, config.data.train_path, "_TRAIN");
  const auto test_path = ucr_file(config, config.data.test_path, "_TEST");
  auto train_rows = read_ucr_file(train_path);
  const int normal = config.data.normal_class != 0 ? config.data.normal_class : major_class(train_rows);
  return {label_rows(config.data.name + "-train", std::move(train_rows), normal),
          label_rows(config.data.name + "-test", read_ucr_file(test_path), normal)};
}

TrainingResult fit_model(const Dataset& train, const ExperimentConfig& config, std::uint64_t seed) {
  TrainingConfig tc = config.train;
  tc.seed = seed;
  auto result = train_model(config.data.normalize ? znormalize(train) : train, tc);
  result.model.normalize = config.data.normalize;
  result.model.aggregation = config.aggregation;
  result.model.shapelet_quantile = config.shapelet_quantile;
  return result;
}

RunOutcome run_single(const ExperimentConfig& config, int run_index, const RunSettings& settings) {
  RunOutcome out;
  out.run = run_index;
  out.seed = run_seed(config, run_index);
  const auto corpus = load_corpus(config, out.seed);

  auto split = build_benchmark(corpus.train_pool, static_cast<std::size_t>(settings.anomaly_count),
                               derive_seed(out.seed, 21));
  Dataset train = std::move(split.train);
  if (settings.augment) {
    train = augment_training_set(train, config.augment_fractions, config.augment_copies, derive_seed(out.seed, 22));
  }
  out.train_size = train.series.size();
  out.train_anomalies = train.count(Label::Anomaly);

  out.test = corpus.test_pool;
  if (settings.keep_ratio < 1.0) {
    const std::uint64_t deletion_seed = derive_seed(out.seed, 23);
    for (std::size_t i = 0; i < out.test.series.size(); ++i) {
      out.test.series[i] = apply_type2_deletion(out.test.series[i], 1.0 - settings.keep_ratio,
                                                derive_seed(deletion_seed, i));
    }
  }
  out.test_size = out.test.series.size();

  ExperimentConfig run_config = config;
  if (settings.num_segments >= 0) run_config.train.num_segments = settings.num_segments;
  auto fitted = fit_model(train, run_config, out.seed);
  out.model = std::move(fitted.model);
  out.trace = std::move(fitted.trace);

  out.reports = score_dataset(out.test, out.model, aggregation_from_string(config.aggregation),
                              config.shapelet_quantile);
  std::vector<double> scores;
  std::vector<Label> labels;
  for (std::size_t i = 0; i < out.reports.size(); ++i) {
    scores.push_back(out.reports[i].series_score);
    labels.push_back(out.test.series[i].label.value_or(Label::Normal));
  }
  out.auc = auc(scores, labels);
  out.aupr = aupr(scores, labels);
  if (config.data.source == "synthetic" && settings.keep_ratio == 1.0) {
    const auto& s = config.data.synth;
    out.localization_rate = localization_rate(out.reports, {s.anomaly_offset + 1, s.anomaly_offset + s.anomaly_length});
  }
  return out;
}

std::vector<RunOutcome> run_all(const ExperimentConfig& config, const RunSettings& settings) {
  std::vector<RunOutcome> outcomes(static_cast<std::size_t>(config.runs));
  std::vector<std::exception_ptr> errors(outcomes.size());
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < config.runs; i = next++) {
      try {
        outcomes[static_cast<std::size_t>(i)] = run_single(config, i, settings);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  int threads = config.threads > 0 ? config.threads : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::clamp(threads, 1, config.runs);
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      throw std::runtime_error("run " + std::to_string(i) + " (seed " + std::to_string(run_seed(config, int(i))) +
                               ") failed: " + e.what());
    }
  }
  return outcomes;
}

MetricResult collect_metrics(const std::vector<RunOutcome>& outcomes) {
  MetricResult m;
  for (const auto& o : outcomes) {
    m.auc_runs.push_back(o.auc);
    m.aupr_runs.push_back(o.aupr);
  }
  return m;
}

double span_jaccard(std::pair<int, int> a, std::pair<int, int> b) {
  const int inter = std::max(0, std::min(a.second, b.second) - std::max(a.first, b.first) + 1);
  const int uni = (a.second - a.first + 1) + (b.second - b.first + 1) - inter;
  return uni > 0 ? static_cast<double>(inter) / uni : 0.0;
}

double localization_rate(const std::vector<ScoreReport>& reports, std::pair<int, int> truth) {
  int anomalous = 0, hits = 0;
  for (const auto& r : reports) {
    if (!r.label || *r.label != Label::Anomaly) continue;
    ++anomalous;
    if (!r.shapelets.empty() && span_jaccard({r.shapelets.front().start, r.shapelets.front().end}, truth) > 0.3) {
      ++hits;
    }
  }
  if (anomalous == 0) throw ArgumentError("no anomalous series to localize");
  return static_cast<double>(hits) / anomalous;
}

ExperimentResult run_benchmark(const ExperimentConfig& config) {
  validate_experiment(config);
  RunSettings settings;
  settings.anomaly_count = config.data.anomaly_count;
  settings.augment = config.augment;
  ExperimentResult result{ExperimentKind::Benchmark, config.data.name, {}};
  result.rows.push_back(make_row("anomaly_count=" + std::to_string(settings.anomaly_count),
                                 {{"anomaly_count", settings.anomaly_count}}, run_all(config, settings)));
  return result;
}

ExperimentResult run_synthetic(const ExperimentConfig& config) {
  ExperimentConfig c = config;
  c.data.source = "synthetic";
  c.data.name = "synthetic";
  auto result = run_benchmark(c);
  result.kind = ExperimentKind::Synthetic;
  return result;
}

ExperimentResult run_contamination(const ExperimentConfig& config) {
  validate_experiment(config);
  const std::size_t normals = load_corpus(config, run_seed(config, 0)).train_pool.count(Label::Normal);
  ExperimentResult result{ExperimentKind::Contamination, config.data.name, {}};
  for (double f : config.contamination_fractions) {
    RunSettings settings;
    settings.anomaly_count = static_cast<int>(std::floor(f * static_cast<double>(normals) + 0.5));
    settings.augment = config.augment;
    result.rows.push_back(make_row("anomalies=" + std::to_string(settings.anomaly_count),
                                   {{"fraction", f}, {"anomaly_count", settings.anomaly_count}},
                                   run_all(config, settings)));
  }
  const ResultRow* clean = &result.rows.front();
  for (const auto& row : result.rows) {
    if (row.knobs["anomaly_count"] == 0) clean = &row;
  }
  const double clean_auc = clean->metrics.auc_mean();
  for (auto& row : result.rows) row.relative_loss = (clean_auc - row.metrics.auc_mean()) / clean_auc;
  return result;
}

ExperimentResult run_deletion(const ExperimentConfig& config) {
  validate_experiment(config);
  ExperimentResult result{ExperimentKind::Deletion, config.data.name, {}};
  for (bool augmented : {false, true}) {
    std::optional<double> full;
    const std::size_t first = result.rows.size();
    for (double ratio : config.deletion_ratios) {
      RunSettings settings;
      settings.anomaly_count = config.data.anomaly_count;
      settings.keep_ratio = ratio;
      settings.augment = augmented;
      auto row = make_row((augmented ? "augmented, length=" : "plain, length=") + format_percent(ratio) + "%",
                          {{"keep_ratio", ratio}, {"augmented", augmented}}, run_all(config, settings));
      if (ratio == 1.0) full = row.metrics.auc_mean();
      result.rows.push_back(std::move(row));
    }
    if (full) {
      for (std::size_t i = first; i < result.rows.size(); ++i) {
        result.rows[i].auc_drop = *full - result.rows[i].metrics.auc_mean();
      }
    }
  }
  return result;
}

ExperimentResult run_ablation_segments(const ExperimentConfig& config) {
  validate_experiment(config);
  ExperimentResult result{ExperimentKind::Ablation, config.data.name, {}};
  for (int m : config.segment_counts) {
    RunSettings settings;
    settings.anomaly_count = config.data.anomaly_count;
    settings.augment = config.augment;
    settings.num_segments = m;
    result.rows.push_back(make_row("M=" + std::to_string(m), {{"num_segments", m}}, run_all(config, settings)));
  }
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  switch (config.kind) {
    case ExperimentKind::Benchmark: return run_benchmark(config);
    case ExperimentKind::Contamination: return run_contamination(config);
    case ExperimentKind::Deletion: return run_deletion(config);
    case ExperimentKind::Ablation: return run_ablation_segments(config);
    case ExperimentKind::Synthetic: return run_synthetic(config);
  }
  throw ConfigError("unknown experiment kind");
}

nlohmann::json results_json(const ExperimentResult& result, const ExperimentConfig& config) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : result.rows) {
    nlohmann::json r = {{"setting", row.setting}, {"knobs", row.knobs}, {"metrics", row.metrics}};
    if (row.relative_loss) r["relative_loss"] = *row.relative_loss;
    if (row.auc_drop) r["auc_drop"] = *row.auc_drop;
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& o : row.outcomes) {
      nlohmann::json run = {{"run", o.run},
                            {"seed", o.seed},
                            {"auc", o.auc},
                            {"aupr", o.aupr},
                            {"train_size", o.train_size},
                            {"train_anomalies", o.train_anomalies},
                            {"test_size", o.test_size},
                            {"num_segments", o.model.num_segments},
                            {"K", o.model.gmm.K()}};
      if (o.localization_rate) run["localization_rate"] = *o.localization_rate;
      if (!o.trace.rounds.empty()) {
        run["o1"] = o.trace.rounds.back().bound_lower;
        run["o3"] = o.trace.rounds.back().bound_upper;
      }
      runs.push_back(run);
    }
    r["runs"] = runs;
    rows.push_back(r);
  }
  return {{"kind", to_string(result.kind)}, {"dataset", result.dataset}, {"config", config}, {"rows", rows}};
}

std::string results_markdown(const ExperimentResult& result) {
  std::ostringstream md;
  md << "# " << to_string(result.kind) << ": " << result.dataset << "\n\n";
  md << "| setting | runs | AUC mean | AUC sd | AUPR mean | AUPR sd | extra |\n";
  md << "|---|---|---|---|---|---|---|\n";
  for (const auto& row : result.rows) {
    std::string extra;
    if (row.relative_loss) extra = "loss " + format_percent(*row.relative_loss) + "%";
    if (row.auc_drop) extra = "drop " + format_percent(*row.auc_drop) + " pts";
    bool have_loc = !row.outcomes.empty() && row.outcomes.front().localization_rate.has_value();
    if (have_loc) {
      double loc = 0.0;
      for (const auto& o : row.outcomes) loc += o.localization_rate.value_or(0.0);
      extra = "localization " + format_percent(loc / static_cast<double>(row.outcomes.size())) + "%";
    }
    md << "| " << row.setting << " | " << row.metrics.n_runs() << " | " << format_percent(row.metrics.auc_mean())
       << " | " << format_percent(row.metrics.auc_sd()) << " | " << format_percent(row.metrics.aupr_mean()) << " | "
       << format_percent(row.metrics.aupr_sd()) << " | " << extra << " |\n";
  }
  return md.str();
}

void write_results(const std::filesystem::path& dir, const ExperimentResult& result, const ExperimentConfig& config) {
  std::filesystem::create_directories(dir);
  write_json(dir / "results.json", results_json(result, config));
  {
    std::ofstream md(dir / "results.md");
    md << results_markdown(result);
  }
  for (const auto& row : result.rows) {
    const std::string tag = slug(row.setting);
    for (const auto& o : row.outcomes) {
      const std::string name = tag + "_run" + std::to_string(o.run);
      write_reports_jsonl(dir / "scores" / (name + ".jsonl"), o.reports);
      write_json(dir / "trace" / (name + ".json"), o.trace);
    }
    if (!row.outcomes.empty()) {
      write_latent_csv(dir / "latent" / (tag + "_run0.csv"), export_latent(row.outcomes.front().test,
                                                                          row.outcomes.front().model));
    }
  }
}

}  // namespace seq2gmm
