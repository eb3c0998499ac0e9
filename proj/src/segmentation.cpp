#include "seq2gmm/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>

#include "seq2gmm/errors.hpp"
#include "seq2gmm/matrix_json.hpp"
#include "seq2gmm/mixture.hpp"

namespace seq2gmm {

void validate_breakpoints(int length, const std::vector<int>& breakpoints) {
  if (breakpoints.size() < 2) throw ArgumentError("need at least two breakpoints");
  if (breakpoints.front() != 1 || breakpoints.back() != length) {
    throw ArgumentError("breakpoints must start at 1 and end at the series length " + std::to_string(length));
  }
  for (std::size_t j = 1; j < breakpoints.size(); ++j) {
    if (breakpoints[j] - breakpoints[j - 1] < kMinBreakpointGap) {
      throw ArgumentError("breakpoints " + std::to_string(breakpoints[j - 1]) + " and " +
                          std::to_string(breakpoints[j]) + " are closer than the minimum segment length");
    }
  }
}

Eigen::MatrixXd regression_matrix(int length, const std::vector<int>& breakpoints) {
  validate_breakpoints(length, breakpoints);
  const auto M = static_cast<Eigen::Index>(breakpoints.size()) - 1;
  Eigen::MatrixXd A(length, M + 1);
  for (Eigen::Index row = 0; row < length; ++row) {
    const int i = static_cast<int>(row) + 1;
    A(row, 0) = 1.0;
    for (Eigen::Index j = 0; j < M; ++j) {
      const int b = breakpoints[static_cast<std::size_t>(j)];
      A(row, j + 1) = i > b ? static_cast<double>(i - b) : 0.0;
    }
  }
  return A;
}

PiecewiseFit fit_piecewise(std::span<const double> values, const std::vector<int>& breakpoints) {
  const int length = static_cast<int>(values.size());
  const Eigen::MatrixXd A = regression_matrix(length, breakpoints);
  const Eigen::Map<const Eigen::VectorXd> s(values.data(), length);

  PiecewiseFit fit;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  if (qr.rank() == A.cols()) {
    fit.beta = qr.solve(s);
  } else {
    Eigen::MatrixXd normal = A.transpose() * A;
    normal.diagonal().array() += 1e-8;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      throw NumericalError("piecewise regression is singular even after ridge regularization");
    }
    fit.beta = ldlt.solve(A.transpose() * s);
  }
  if (!fit.beta.allFinite()) throw NumericalError("piecewise regression produced non-finite slopes");
  fit.residual_sse = (A * fit.beta - s).squaredNorm();
  return fit;
}

std::vector<double> piecewise_curve(int length, const std::vector<int>& breakpoints, const Eigen::VectorXd& beta) {
  Eigen::VectorXd curve = regression_matrix(length, breakpoints) * beta;
  return {curve.data(), curve.data() + curve.size()};
}

namespace {

// How many more breakpoints the current partition can still absorb.
int remaining_capacity(const std::vector<int>& breakpoints) {
  int capacity = 0;
  for (std::size_t j = 1; j < breakpoints.size(); ++j) {
    capacity += (breakpoints[j] - breakpoints[j - 1]) / kMinBreakpointGap - 1;
  }
  return capacity;
}

}  // namespace

SegmentationModel optimize_breakpoints(std::span<const double> values, int M, std::vector<double>* sse_trace) {
  const int length = static_cast<int>(values.size());
  if (M < 1) throw ArgumentError("segment count must be positive");
  if (length < kMinBreakpointGap * M + 1) {
    throw ArgumentError("series of length " + std::to_string(length) + " is too short for " + std::to_string(M) +
                        " segments");
  }

  std::vector<int> breakpoints{1, length};
  PiecewiseFit best_fit = fit_piecewise(values, breakpoints);
  if (sse_trace) sse_trace->assign(1, best_fit.residual_sse);

  for (int round = 1; round < M; ++round) {
    const int still_needed = M - round - 1;
    int best_position = -1;
    std::vector<int> best_breakpoints;
    PiecewiseFit round_best;
    round_best.residual_sse = std::numeric_limits<double>::infinity();
    for (int p = 2; p < length; ++p) {
      auto it = std::lower_bound(breakpoints.begin(), breakpoints.end(), p);
      if (*it == p) continue;
      if (*it - p < kMinBreakpointGap || p - *std::prev(it) < kMinBreakpointGap) continue;
      std::vector<int> candidate = breakpoints;
      candidate.insert(candidate.begin() + (it - breakpoints.begin()), p);
      if (remaining_capacity(candidate) < still_needed) continue;
      PiecewiseFit fit = fit_piecewise(values, candidate);
      if (best_position < 0 ||
          fit.residual_sse < round_best.residual_sse - 1e-12 * std::max(1.0, round_best.residual_sse)) {
        round_best = std::move(fit);
        best_position = p;
        best_breakpoints = std::move(candidate);
      }
    }
    if (best_position < 0) throw ArgumentError("no admissible breakpoint position left");
    breakpoints = std::move(best_breakpoints);
    best_fit = std::move(round_best);
    if (sse_trace) sse_trace->push_back(best_fit.residual_sse);
  }

  SegmentationModel model;
  model.num_segments = M;
  model.breakpoints = std::move(breakpoints);
  model.beta = std::move(best_fit.beta);
  model.residual_sse = best_fit.residual_sse;
  return model;
}

double calinski_harabasz(const std::vector<Eigen::VectorXd>& points, const std::vector<int>& labels) {
  if (points.size() != labels.size()) throw ArgumentError("point and label counts differ");
  if (points.empty()) throw ArgumentError("calinski_harabasz of an empty set");
  const auto N = static_cast<double>(points.size());
  const auto d = points.front().size();

  std::map<int, std::pair<Eigen::VectorXd, double>> clusters;
  Eigen::VectorXd overall = Eigen::VectorXd::Zero(d);
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto [it, inserted] = clusters.try_emplace(labels[i], Eigen::VectorXd::Zero(d), 0.0);
    it->second.first += points[i];
    it->second.second += 1.0;
    overall += points[i];
  }
  overall /= N;
  const auto K = static_cast<double>(clusters.size());
  if (clusters.size() < 2) {
    std::cerr << "warning: Calinski-Harabasz index of a single cluster is undefined\n";
    return std::numeric_limits<double>::infinity();
  }
  for (auto& [label, c] : clusters) c.first /= c.second;

  double between = 0.0;
  for (const auto& [label, c] : clusters) between += c.second * (c.first - overall).squaredNorm();
  double within = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) within += (points[i] - clusters.at(labels[i]).first).squaredNorm();

  if (within <= 0.0 || N <= K) {
    std::cerr << "warning: Calinski-Harabasz index with zero within-cluster scatter\n";
    return std::numeric_limits<double>::infinity();
  }
  return (between / (K - 1.0)) / (within / (N - K));
}

std::vector<double> resample_linear(std::span<const double> values, int n) {
  if (values.empty() || n < 1) throw ArgumentError("resampling needs a non-empty input and a positive length");
  std::vector<double> out(static_cast<std::size_t>(n));
  if (values.size() == 1 || n == 1) {
    std::fill(out.begin(), out.end(), values.front());
    if (n == 1) out[0] = values.front();
    return out;
  }
  const double span = static_cast<double>(values.size() - 1);
  for (int j = 0; j < n; ++j) {
    const double t = span * j / (n - 1);
    const auto lo = std::min(static_cast<std::size_t>(t), values.size() - 2);
    const double frac = t - static_cast<double>(lo);
    out[static_cast<std::size_t>(j)] = (1.0 - frac) * values[lo] + frac * values[lo + 1];
  }
  return out;
}

int select_first_decrease(const std::function<double(int)>& score_for_m, int M_max) {
  if (M_max < 2) throw ArgumentError("M_max must be at least 2");
  double previous = score_for_m(2);
  for (int M = 3; M <= M_max; ++M) {
    const double score = score_for_m(M);
    if (score < previous) return M - 1;
    previous = score;
  }
  return M_max;
}

double segmentation_cluster_score(const Dataset& train, int M, int resample_len, std::uint64_t seed) {
  std::vector<Eigen::VectorXd> pooled;
  for (const auto& series : train.series) {
    auto model = optimize_breakpoints(series.values, M);
    for (const auto& segment : split_series(series, model)) {
      auto resampled = resample_linear(segment.values, resample_len);
      pooled.emplace_back(Eigen::Map<Eigen::VectorXd>(resampled.data(), resample_len));
    }
  }
  auto clusters = kmeans(pooled, M, seed);
  return calinski_harabasz(pooled, clusters.labels);
}

int select_num_segments(const Dataset& train, int M_max, int resample_len, std::uint64_t seed,
                        std::vector<double>* scores) {
  if (scores) scores->clear();
  return select_first_decrease(
      [&](int M) {
        double score = segmentation_cluster_score(train, M, resample_len, seed);
        if (scores) scores->push_back(score);
        return score;
      },
      M_max);
}

std::vector<Segment> split_series(const TimeSeries& series, const SegmentationModel& model) {
  const int length = static_cast<int>(series.values.size());
  validate_breakpoints(length, model.breakpoints);
  if (static_cast<int>(model.breakpoints.size()) != model.num_segments + 1) {
    throw ArgumentError("segmentation model has inconsistent segment count");
  }
  std::vector<Segment> segments;
  for (int j = 0; j < model.num_segments; ++j) {
    Segment seg;
    seg.series_id = series.id;
    seg.index = j + 1;
    seg.start = j == 0 ? model.breakpoints[0] : model.breakpoints[static_cast<std::size_t>(j)] + 1;
    seg.end = model.breakpoints[static_cast<std::size_t>(j) + 1];
    seg.values.assign(series.values.begin() + (seg.start - 1), series.values.begin() + seg.end);
    segments.push_back(std::move(seg));
  }
  return segments;
}

void to_json(nlohmann::json& j, const SegmentationModel& model) {
  j = nlohmann::json{{"M", model.num_segments},
                     {"breakpoints", model.breakpoints},
                     {"beta", vector_to_json(model.beta)},
                     {"residual_sse", model.residual_sse}};
}

void from_json(const nlohmann::json& j, SegmentationModel& model) {
  model.num_segments = j.at("M").get<int>();
  model.breakpoints = j.at("breakpoints").get<std::vector<int>>();
  model.beta = vector_from_json(j.at("beta"));
  model.residual_sse = j.at("residual_sse").get<double>();
}

void to_json(nlohmann::json& j, const Segment& segment) {
  j = nlohmann::json{{"series_id", segment.series_id},
                     {"index", segment.index},
                     {"start", segment.start},
                     {"end", segment.end}};
}

}  // namespace seq2gmm
