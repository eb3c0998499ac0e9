#include "seq2gmm/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "seq2gmm/errors.hpp"

namespace seq2gmm {

namespace {

TimeSeries prepared(const TimeSeries& series, const TrainedModel& model) {
  validate_series(series);
  return model.normalize ? znormalize(series) : series;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

}  // namespace

Aggregation aggregation_from_string(const std::string& text) {
  if (text == "max") return Aggregation::Max;
  if (text == "mean") return Aggregation::Mean;
  throw ConfigError("unknown aggregation '" + text + "' (expected max or mean)");
}

std::string to_string(Aggregation aggregation) { return aggregation == Aggregation::Max ? "max" : "mean"; }

std::vector<Segment> segment_for_scoring(const TimeSeries& series, const TrainedModel& model) {
  TimeSeries s = prepared(series, model);
  return split_series(s, optimize_breakpoints(s.values, model.num_segments));
}

std::vector<double> score_segments(const TimeSeries& series, const TrainedModel& model) {
  GmmDensity density(model.gmm);
  std::vector<double> energies;
  for (const auto& y : compute_latents(segment_for_scoring(series, model), model.networks)) {
    energies.push_back(density.energy(y));
  }
  return energies;
}

double score_series(std::span<const double> segment_scores, Aggregation aggregation) {
  if (segment_scores.empty()) throw ArgumentError("no segment scores to aggregate");
  if (aggregation == Aggregation::Max) return *std::max_element(segment_scores.begin(), segment_scores.end());
  double total = 0.0;
  for (double s : segment_scores) total += s;
  return total / static_cast<double>(segment_scores.size());
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ArgumentError("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw ArgumentError("quantile level must lie in [0, 1]");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<Shapelet> select_shapelets(std::span<const Segment> segments, std::span<const double> energies,
                                       double threshold) {
  if (segments.size() != energies.size()) throw ArgumentError("one energy per segment expected");
  std::vector<Shapelet> out;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (energies[i] > threshold) out.push_back({segments[i].index, segments[i].start, segments[i].end, energies[i]});
  }
  std::stable_sort(out.begin(), out.end(), [](const Shapelet& a, const Shapelet& b) { return a.score > b.score; });
  return out;
}

std::vector<Shapelet> localize_shapelets(const TimeSeries& series, const TrainedModel& model, double quantile) {
  if (!(quantile > 0.0 && quantile < 1.0)) throw ArgumentError("shapelet quantile must lie in (0, 1)");
  if (model.train_energies.empty()) throw ArgumentError("model carries no training energies");
  auto segments = segment_for_scoring(series, model);
  GmmDensity density(model.gmm);
  std::vector<double> energies;
  for (const auto& y : compute_latents(segments, model.networks)) energies.push_back(density.energy(y));
  return select_shapelets(segments, energies, quantile_sorted(model.train_energies, quantile));
}

ScoreReport score_report(const TimeSeries& series, const TrainedModel& model, Aggregation aggregation,
                         double quantile) {
  if (!(quantile > 0.0 && quantile < 1.0)) throw ArgumentError("shapelet quantile must lie in (0, 1)");
  ScoreReport report;
  report.series_id = series.id;
  report.label = series.label;
  auto segments = segment_for_scoring(series, model);
  GmmDensity density(model.gmm);
  for (const auto& y : compute_latents(segments, model.networks)) report.segment_scores.push_back(density.energy(y));
  for (const auto& s : segments) report.spans.emplace_back(s.start, s.end);
  report.series_score = score_series(report.segment_scores, aggregation);
  if (!model.train_energies.empty()) {
    report.shapelets =
        select_shapelets(segments, report.segment_scores, quantile_sorted(model.train_energies, quantile));
  }
  return report;
}

std::vector<ScoreReport> score_dataset(const Dataset& dataset, const TrainedModel& model, Aggregation aggregation,
                                       double quantile) {
  std::vector<ScoreReport> reports;
  reports.reserve(dataset.series.size());
  for (const auto& series : dataset.series) reports.push_back(score_report(series, model, aggregation, quantile));
  return reports;
}

Matrix principal_projection(const std::vector<Vector>& points, int dims) {
  if (points.empty()) throw ArgumentError("no points to project");
  const Eigen::Index d = points.front().size();
  if (dims < 1 || dims > d) throw ArgumentError("projection dimension out of range");
  const Eigen::Index n = static_cast<Eigen::Index>(points.size());
  Matrix X(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (points[static_cast<std::size_t>(i)].size() != d) throw ArgumentError("points differ in dimension");
    X.row(i) = points[static_cast<std::size_t>(i)].transpose();
  }
  X.rowwise() -= X.colwise().mean();
  Matrix cov = X.transpose() * X / static_cast<double>(std::max<Eigen::Index>(n - 1, 1));
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition of the latent covariance failed");
  Matrix axes(d, dims);
  for (int k = 0; k < dims; ++k) {
    Vector v = eig.eigenvectors().col(d - 1 - k);  // eigenvalues ascend
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    axes.col(k) = v;
  }
  return X * axes;
}

LatentExport export_latent(const Dataset& dataset, const TrainedModel& model) {
  GmmDensity density(model.gmm);
  LatentExport rows;
  std::vector<Vector> ys;
  for (const auto& series : dataset.series) {
    auto segments = segment_for_scoring(series, model);
    auto latents = compute_latents(segments, model.networks);
    for (std::size_t i = 0; i < segments.size(); ++i) {
      LatentRow row;
      row.series_id = series.id;
      row.segment_index = segments[i].index;
      row.label = series.label;
      row.y = latents[i];
      row.energy = density.energy(latents[i]);
      ys.push_back(latents[i]);
      rows.push_back(std::move(row));
    }
  }
  if (rows.empty()) return rows;
  Matrix projected = principal_projection(ys, std::min<int>(2, static_cast<int>(ys.front().size())));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].y2d.setZero();
    rows[i].y2d.head(projected.cols()) = projected.row(static_cast<Eigen::Index>(i)).transpose();
  }
  return rows;
}

void to_json(nlohmann::json& j, const ScoreReport& r) {
  nlohmann::json shapelets = nlohmann::json::array();
  for (const auto& s : r.shapelets) {
    shapelets.push_back({{"segment_index", s.segment_index}, {"start", s.start}, {"end", s.end}, {"score", s.score}});
  }
  nlohmann::json spans = nlohmann::json::array();
  for (const auto& [a, b] : r.spans) spans.push_back({a, b});
  j = {{"series_id", r.series_id},
       {"segment_scores", r.segment_scores},
       {"segment_spans", spans},
       {"series_score", r.series_score},
       {"shapelets", shapelets}};
  j["label"] = r.label ? nlohmann::json(to_string(*r.label)) : nlohmann::json(nullptr);
}

void write_reports_jsonl(const std::filesystem::path& path, const std::vector<ScoreReport>& reports) {
  auto out = open_output(path);
  for (const auto& r : reports) out << nlohmann::json(r).dump() << '\n';
}

void write_scores_csv(const std::filesystem::path& path, const std::vector<ScoreReport>& reports) {
  auto out = open_output(path);
  out << "series_id,score,label\n";
  for (const auto& r : reports) out << r.series_id << ',' << r.series_score << ',' << (r.label ? to_string(*r.label) : "") << '\n';
}

void write_latent_csv(const std::filesystem::path& path, const LatentExport& rows) {
  auto out = open_output(path);
  out << "series_id,segment_index,label,energy,pc1,pc2";
  const Eigen::Index d = rows.empty() ? 0 : rows.front().y.size();
  for (Eigen::Index k = 0; k < d; ++k) out << ",y" << k + 1;
  out << '\n';
  for (const auto& r : rows) {
    out << r.series_id << ',' << r.segment_index << ',' << (r.label ? to_string(*r.label) : "") << ',' << r.energy
        << ',' << r.y2d(0) << ',' << r.y2d(1);
    for (Eigen::Index k = 0; k < d; ++k) out << ',' << r.y(k);
    out << '\n';
  }
}

}  // namespace seq2gmm
