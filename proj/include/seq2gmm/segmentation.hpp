#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "seq2gmm/dataio.hpp"

namespace seq2gmm {

/// Continuous piecewise-linear approximation of one series.
///
/// Breakpoints are 1-based sample positions b_1 = 1 < b_2 < ... < b_{M+1} = length.
/// The fitted curve is l(i) = beta_1 + sum_j beta_{j+1} * max(i - b_j, 0), so beta_1 is the
/// intercept and every later coefficient adds a slope change at its breakpoint.
struct SegmentationModel {
  int num_segments = 1;
  std::vector<int> breakpoints;
  Eigen::VectorXd beta;
  double residual_sse = 0.0;
};

/// A contiguous piece of a series. `start`/`end` are 1-based inclusive sample positions.
struct Segment {
  std::string series_id;
  int index = 1;
  int start = 1;
  int end = 1;
  std::vector<double> values;
};

/// Consecutive breakpoints must be at least this far apart.
inline constexpr int kMinBreakpointGap = 2;

/// Throws ArgumentError unless `breakpoints` is a valid partition of [1, length].
void validate_breakpoints(int length, const std::vector<int>& breakpoints);

/// Column 0 is the intercept; column j is max(i - b_j, 0) for row i (1-based).
Eigen::MatrixXd regression_matrix(int length, const std::vector<int>& breakpoints);

struct PiecewiseFit {
  Eigen::VectorXd beta;
  double residual_sse = 0.0;
};

/// Least-squares slopes for fixed breakpoints. Falls back to a 1e-8 ridge when A^T A is singular.
PiecewiseFit fit_piecewise(std::span<const double> values, const std::vector<int>& breakpoints);

/// Evaluates the piecewise model at every sample.
std::vector<double> piecewise_curve(int length, const std::vector<int>& breakpoints, const Eigen::VectorXd& beta);

/// Greedy breakpoint insertion: M-1 rounds, each adding the single position that lowers the
/// residual most (smallest position on ties). Requires length >= 2M + 1.
/// `sse_trace`, if given, receives the residual after every round (starting with M = 1).
SegmentationModel optimize_breakpoints(std::span<const double> values, int M,
                                       std::vector<double>* sse_trace = nullptr);

/// (B / (K-1)) / (W / (N-K)). Returns +inf (and warns) for a single cluster or zero within-scatter.
double calinski_harabasz(const std::vector<Eigen::VectorXd>& points, const std::vector<int>& labels);

std::vector<double> resample_linear(std::span<const double> values, int n);

/// First-decrease rule over M = 2, 3, ...: returns M-1 at the first M whose score drops,
/// or M_max if the score never drops.
int select_first_decrease(const std::function<double(int)>& score_for_m, int M_max);

/// Calinski-Harabasz score of K-means (K = M) on every training segment resampled to `resample_len`.
double segmentation_cluster_score(const Dataset& train, int M, int resample_len, std::uint64_t seed);

/// Shared segment count for a dataset. `scores`, if given, receives CH(2), CH(3), ... as evaluated.
int select_num_segments(const Dataset& train, int M_max, int resample_len, std::uint64_t seed,
                        std::vector<double>* scores = nullptr);

/// Cuts a series at its breakpoints. Interior boundary samples belong to the earlier segment.
std::vector<Segment> split_series(const TimeSeries& series, const SegmentationModel& model);

void to_json(nlohmann::json& j, const SegmentationModel& model);
void from_json(const nlohmann::json& j, SegmentationModel& model);
void to_json(nlohmann::json& j, const Segment& segment);

}  // namespace seq2gmm
