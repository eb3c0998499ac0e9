#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "seq2gmm/dataio.hpp"
#include "seq2gmm/trainer.hpp"

namespace seq2gmm {

enum class Aggregation { Max, Mean };

Aggregation aggregation_from_string(const std::string& text);
std::string to_string(Aggregation aggregation);

struct Shapelet {
  int segment_index = 1;
  int start = 1;  ///< 1-based inclusive
  int end = 1;
  double score = 0.0;
};

struct ScoreReport {
  std::string series_id;
  std::optional<Label> label;
  std::vector<double> segment_scores;
  std::vector<std::pair<int, int>> spans;  ///< sample span of every segment
  double series_score = 0.0;
  std::vector<Shapelet> shapelets;
};

/// Segments a series with the model's M (breakpoints re-optimized for this series) and returns the pieces.
std::vector<Segment> segment_for_scoring(const TimeSeries& series, const TrainedModel& model);

/// Sample energy of every segment of the series under the model's frozen mixture.
std::vector<double> score_segments(const TimeSeries& series, const TrainedModel& model);

double score_series(std::span<const double> segment_scores, Aggregation aggregation);

/// Linear-interpolated quantile of ascending values.
double quantile_sorted(std::span<const double> sorted, double q);

/// Segments whose energy exceeds `threshold`, highest score first.
std::vector<Shapelet> select_shapelets(std::span<const Segment> segments, std::span<const double> energies,
                                       double threshold);

/// Segments whose energy exceeds the `quantile` quantile of the training energies, highest score first.
std::vector<Shapelet> localize_shapelets(const TimeSeries& series, const TrainedModel& model, double quantile);

/// Everything above in one pass.
ScoreReport score_report(const TimeSeries& series, const TrainedModel& model, Aggregation aggregation,
                         double quantile);

std::vector<ScoreReport> score_dataset(const Dataset& dataset, const TrainedModel& model, Aggregation aggregation,
                                       double quantile);

struct LatentRow {
  std::string series_id;
  int segment_index = 1;
  std::optional<Label> label;
  Vector y;
  Eigen::Vector2d y2d;
  double energy = 0.0;
};

using LatentExport = std::vector<LatentRow>;

/// Projection of centered points onto the top `dims` principal axes of their sample covariance.
/// Axis signs are fixed so the largest-magnitude loading of each axis is positive.
Matrix principal_projection(const std::vector<Vector>& points, int dims);

LatentExport export_latent(const Dataset& dataset, const TrainedModel& model);

void to_json(nlohmann::json& j, const ScoreReport& report);
void write_reports_jsonl(const std::filesystem::path& path, const std::vector<ScoreReport>& reports);
void write_scores_csv(const std::filesystem::path& path, const std::vector<ScoreReport>& reports);
void write_latent_csv(const std::filesystem::path& path, const LatentExport& rows);

}  // namespace seq2gmm
