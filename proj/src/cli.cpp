#include "seq2gmm/cli.hpp"

#include <fstream>
#include <functional>
#include <iostream>
#include <list>
#include <map>

#include "CLI11.hpp"
#include "seq2gmm/config.hpp"
#include "seq2gmm/errors.hpp"
#include "seq2gmm/experiments.hpp"
#include "seq2gmm/model_io.hpp"
#include "seq2gmm/scoring.hpp"

namespace seq2gmm {

namespace {

struct CommonArgs {
  std::string config_path;
  std::map<std::string, std::string> overrides;
  std::map<std::string, CLI::Option*> override_options;
  CLI::Option* seed_option = nullptr;
  std::string seed;
  std::string input;
  std::string model;
  std::string out;
  std::string results;

  ExperimentConfig resolve() const {
    ExperimentConfig c = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    apply_environment(c);
    for (const auto& [key, option] : override_options) {
      if (option->count() > 0) apply_setting(c, key, overrides.at(key));
    }
    if (seed_option->count() > 0) apply_setting(c, "train.seed", seed);
    if (!results.empty()) c.results_dir = results;
    validate_experiment(c);
    return c;
  }
};

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config_path, "INI-style configuration file");
  for (const auto& key : config_keys()) {
    args.override_options[key] = sub->add_option("--" + key, args.overrides[key], "override " + key);
  }
  args.seed_option = sub->add_option("--seed", args.seed, "alias for --train.seed");
}

/// Reads a label-first file and labels it against `normal_class` when that class occurs.
Dataset read_labeled(const std::string& path, int normal_class) {
  if (path.empty()) throw ConfigError("--input is required");
  if (!std::filesystem::exists(path)) throw std::runtime_error("input file not found: " + path);
  auto rows = read_ucr_file(path);
  const std::string name = std::filesystem::path(path).stem().string();
  if (normal_class == 0) normal_class = major_class(rows);
  bool present = false;
  for (const auto& r : rows) present = present || r.source_class == normal_class;
  if (present) return label_rows(name, std::move(rows), normal_class);
  Dataset d{name, std::move(rows), normal_class};
  validate_dataset(d);
  return d;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string(flag) + " is required");
}

int cmd_synth(const CommonArgs& a) {
  auto c = a.resolve();
  require(a.out, "--out");
  auto data = synthesize_dataset(c.data.synth);
  write_ucr_file(a.out, data);
  std::cout << "wrote " << data.series.size() << " series to " << a.out << '\n';
  return 0;
}

int cmd_segment(const CommonArgs& a) {
  auto c = a.resolve();
  auto data = read_labeled(a.input, c.data.normal_class);
  if (c.data.normalize) data = znormalize(data);
  std::vector<double> scores;
  int M = c.train.num_segments;
  if (M == 0) M = select_num_segments(data, c.train.max_segments, c.train.resample_len, c.train.seed, &scores);
  std::ofstream file;
  if (!a.out.empty()) file.open(a.out);
  std::ostream& out = a.out.empty() ? std::cout : file;
  if (!out) throw std::runtime_error("cannot write " + a.out);
  for (const auto& s : data.series) {
    nlohmann::json line = {{"series_id", s.id}, {"model", optimize_breakpoints(s.values, M)}};
    out << line.dump() << '\n';
  }
  if (!scores.empty()) std::cerr << nlohmann::json({{"selected_M", M}, {"ch_scores", scores}}).dump() << '\n';
  return 0;
}

int cmd_train(const CommonArgs& a) {
  auto c = a.resolve();
  require(a.out, "--out");
  auto data = read_labeled(a.input, c.data.normal_class);
  c.train.log_progress = true;
  auto fitted = fit_model(data, c, c.train.seed);
  fitted.model.normal_class = data.normal_class;
  save_model(a.out, fitted.model);
  save_sidecar(sidecar_path(a.out), c.train, fitted.trace, dataset_fingerprint(data),
               {{"input", a.input}, {"experiment_config", c}});
  std::cout << "wrote model to " << a.out << " (M=" << fitted.model.num_segments << ", K=" << fitted.model.gmm.K()
            << ")\n";
  return 0;
}

int cmd_score(const CommonArgs& a) {
  require(a.model, "--model");
  auto model = load_model(a.model);
  a.resolve();
  auto data = read_labeled(a.input, model.normal_class);
  auto reports = score_dataset(data, model, aggregation_from_string(model.aggregation), model.shapelet_quantile);
  if (a.out.empty()) {
    for (const auto& r : reports) std::cout << nlohmann::json(r).dump() << '\n';
  } else if (std::filesystem::path(a.out).extension() == ".csv") {
    write_scores_csv(a.out, reports);
  } else {
    write_reports_jsonl(a.out, reports);
  }
  return 0;
}

int cmd_eval(const CommonArgs& a) {
  if (!a.model.empty()) {
    auto model = load_model(a.model);
    a.resolve();
    auto data = read_labeled(a.input, model.normal_class);
    auto reports = score_dataset(data, model, aggregation_from_string(model.aggregation), model.shapelet_quantile);
    std::vector<double> scores;
    std::vector<Label> labels;
    for (std::size_t i = 0; i < reports.size(); ++i) {
      scores.push_back(reports[i].series_score);
      labels.push_back(data.series[i].label.value_or(Label::Normal));
    }
    std::cout << nlohmann::json({{"auc", auc(scores, labels)}, {"aupr", aupr(scores, labels)},
                                 {"series", reports.size()}})
                     .dump()
              << '\n';
    if (!a.out.empty()) write_reports_jsonl(a.out, reports);
    return 0;
  }
  auto c = a.resolve();
  auto result = run_experiment(c);
  write_results(c.results_dir, result, c);
  std::cout << results_markdown(result);
  return 0;
}

int cmd_experiment(const CommonArgs& a, ExperimentKind kind) {
  auto c = a.resolve();
  c.kind = kind;
  validate_experiment(c);
  auto result = run_experiment(c);
  write_results(c.results_dir, result, c);
  std::cout << results_markdown(result);
  return 0;
}

int cmd_export_latent(const CommonArgs& a) {
  require(a.model, "--model");
  require(a.out, "--out");
  auto model = load_model(a.model);
  a.resolve();
  auto data = read_labeled(a.input, model.normal_class);
  write_latent_csv(a.out, export_latent(data, model));
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Group anomaly detection for quasi-periodic time series"};
  app.require_subcommand(1);
  std::list<CommonArgs> per_command;
  std::function<int()> action;

  auto add = [&](const std::string& name, const std::string& help, std::function<int(const CommonArgs&)> run) {
    CommonArgs& args = per_command.emplace_back();
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub, args);
    sub->add_option("--input", args.input, "label-first delimited data file");
    sub->add_option("--model", args.model, "model file");
    sub->add_option("--out", args.out, "output file");
    sub->add_option("--results", args.results, "results directory for experiments");
    sub->callback([&action, &args, run] { action = [&args, run] { return run(args); }; });
  };
  add("synth", "write a synthetic dataset", cmd_synth);
  add("segment", "print piecewise-linear breakpoints per series", cmd_segment);
  add("train", "train a model on a data file", cmd_train);
  add("score", "score series with a trained model", cmd_score);
  add("eval", "evaluate a model on labeled data, or run the configured experiment", cmd_eval);
  add("contaminate", "contamination sweep",
      [](const CommonArgs& a) { return cmd_experiment(a, ExperimentKind::Contamination); });
  add("deletion", "test-length deletion sweep",
      [](const CommonArgs& a) { return cmd_experiment(a, ExperimentKind::Deletion); });
  add("ablate", "segment-count ablation",
      [](const CommonArgs& a) { return cmd_experiment(a, ExperimentKind::Ablation); });
  add("export-latent", "write latent vectors and their 2-D projection as CSV", cmd_export_latent);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    return 1;
  }

  try {
    return action();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

int cli_main(const std::vector<std::string>& args) {
  std::vector<std::string> storage = args;
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  argv.push_back(nullptr);
  return cli_main(static_cast<int>(storage.size()), argv.data());
}

}  // namespace seq2gmm
