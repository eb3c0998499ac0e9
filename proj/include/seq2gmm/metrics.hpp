#pragma once

#include <span>
#include <vector>

#include "json.hpp"
#include "seq2gmm/dataio.hpp"

namespace seq2gmm {

/// Mann-Whitney AUC: P(anomaly score > normal score) + 0.5 * P(tie). Anomaly is the positive class.
double auc(std::span<const double> scores, std::span<const Label> labels);

/// Area under the precision-recall curve, step-wise over distinct score thresholds:
/// sum over thresholds of (recall gain) * precision. Anomaly is the positive class.
double aupr(std::span<const double> scores, std::span<const Label> labels);

struct MetricResult {
  std::vector<double> auc_runs;
  std::vector<double> aupr_runs;

  int n_runs() const { return static_cast<int>(auc_runs.size()); }
  double auc_mean() const;
  double auc_sd() const;
  double aupr_mean() const;
  double aupr_sd() const;
};

double mean(std::span<const double> values);
/// Sample standard deviation; 0 for a single value.
double stddev(std::span<const double> values);

void to_json(nlohmann::json& j, const MetricResult& result);

}  // namespace seq2gmm
