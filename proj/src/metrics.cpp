#include "seq2gmm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "seq2gmm/errors.hpp"

namespace seq2gmm {

namespace {

void check_inputs(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) throw MetricError("scores and labels differ in length");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) throw MetricError("NaN score");
    if (labels[i] == Label::Anomaly) ++pos;
  }
  if (pos == 0 || pos == labels.size()) throw MetricError("metric needs both normal and anomalous examples");
}

std::vector<std::size_t> descending_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

double auc(std::span<const double> scores, std::span<const Label> labels) {
  check_inputs(scores, labels);
  // Rank-sum form with midranks for ties.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  double n_pos = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == Label::Anomaly) {
        rank_sum += midrank;
        n_pos += 1.0;
      }
    }
    i = j;
  }
  const double n_neg = static_cast<double>(scores.size()) - n_pos;
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

double aupr(std::span<const double> scores, std::span<const Label> labels) {
  check_inputs(scores, labels);
  auto order = descending_order(scores);
  double total_pos = 0.0;
  for (Label l : labels) total_pos += l == Label::Anomaly ? 1.0 : 0.0;
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, area = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == Label::Anomaly ? tp : fp) += 1.0;
      ++j;
    }
    const double recall = tp / total_pos;
    area += (recall - prev_recall) * tp / (tp + fp);
    prev_recall = recall;
    i = j;
  }
  return area;
}

double mean(std::span<const double> values) {
  if (values.empty()) throw MetricError("mean of no values");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double stddev(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double m = mean(values);
  double sq = 0.0;
  for (double v : values) sq += (v - m) * (v - m);
  return std::sqrt(sq / static_cast<double>(values.size() - 1));
}

double MetricResult::auc_mean() const { return mean(auc_runs); }
double MetricResult::auc_sd() const { return stddev(auc_runs); }
double MetricResult::aupr_mean() const { return mean(aupr_runs); }
double MetricResult::aupr_sd() const { return stddev(aupr_runs); }

void to_json(nlohmann::json& j, const MetricResult& r) {
  j = {{"n_runs", r.n_runs()},
       {"auc_runs", r.auc_runs},
       {"aupr_runs", r.aupr_runs},
       {"auc_mean", r.auc_mean()},
       {"auc_sd", r.auc_sd()},
       {"aupr_mean", r.aupr_mean()},
       {"aupr_sd", r.aupr_sd()}};
}

}  // namespace seq2gmm
