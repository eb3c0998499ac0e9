#include <cmath>
#include <fstream>
#include <string>

#include "doctest.h"
#include "seq2gmm/errors.hpp"
#include "seq2gmm/scoring.hpp"
#include "temp_dir.hpp"

using namespace seq2gmm;

namespace {

std::vector<Segment> three_segments() {
  return {{"a", 1, 1, 4, {}}, {"a", 2, 5, 9, {}}, {"a", 3, 10, 12, {}}};
}

/// Zero networks with one standard-normal component at the origin.
TrainedModel zero_model(int M) {
  TrainedModel m;
  m.num_segments = M;
  m.networks = init_network(3, 4, 1, 1);
  for (auto& [name, w] : parameter_blocks(m.networks)) w->setZero();
  m.gmm.phi = Vector::Ones(1);
  m.gmm.mu = {Vector::Zero(5)};
  m.gmm.sigma = {Matrix::Identity(5, 5)};
  m.train_energies = {0.0, 1.0, 2.0};
  return m;
}

const TrainingResult& small_model() {
  static const TrainingResult result = [] {
    TrainingConfig c;
    c.K = 2;
    c.hidden = 3;
    c.estimator_width = 4;
    c.rounds = 1;
    c.pretrain_epochs = 3;
    c.num_segments = 3;
    c.seed = 9;
    return surrogate_train(znormalize(synthesize_dataset(SynthConfig{30, 8, 0, 4, 10, 5, 1.0, 2})), c);
  }();
  return result;
}

Dataset small_test() { return znormalize(synthesize_dataset(SynthConfig{30, 3, 2, 4, 10, 5, 1.5, 4})); }

std::size_t count_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

}  // namespace

TEST_CASE("series aggregation") {
  const std::vector<double> s{1, 2, 3};
  CHECK(score_series(s, Aggregation::Max) == 3.0);
  CHECK(score_series(s, Aggregation::Mean) == 2.0);
  const std::vector<double> one{-4.5};
  CHECK(score_series(one, Aggregation::Max) == -4.5);
  CHECK(score_series(one, Aggregation::Mean) == -4.5);
  CHECK_THROWS_AS(score_series(std::vector<double>{}, Aggregation::Max), ArgumentError);
  CHECK(aggregation_from_string("mean") == Aggregation::Mean);
  CHECK_THROWS_AS(aggregation_from_string("median"), ConfigError);
}

TEST_CASE("max aggregation dominates the mean") {
  const std::vector<double> s{-3, 7.5, 0.25, 2};
  CHECK(score_series(s, Aggregation::Max) >= score_series(s, Aggregation::Mean));
}

TEST_CASE("quantile of sorted values") {
  const std::vector<double> v{0, 1, 2, 3, 4};
  CHECK(quantile_sorted(v, 0.0) == 0.0);
  CHECK(quantile_sorted(v, 1.0) == 4.0);
  CHECK(quantile_sorted(v, 0.5) == 2.0);
  CHECK(quantile_sorted(v, 0.95) == doctest::Approx(3.8));
  CHECK_THROWS_AS(quantile_sorted(std::vector<double>{}, 0.5), ArgumentError);
  CHECK_THROWS_AS(quantile_sorted(v, 1.5), ArgumentError);
}

TEST_CASE("shapelet selection") {
  const auto segs = three_segments();
  SUBCASE("nothing above the threshold") {
    CHECK(select_shapelets(segs, std::vector<double>{1, 2, 3}, 5.0).empty());
  }
  SUBCASE("one segment above") {
    auto s = select_shapelets(segs, std::vector<double>{1, 6, 3}, 5.0);
    REQUIRE(s.size() == 1);
    CHECK(s[0].segment_index == 2);
    CHECK(s[0].start == 5);
    CHECK(s[0].end == 9);
    CHECK(s[0].score == 6.0);
  }
  SUBCASE("sorted by descending score") {
    auto s = select_shapelets(segs, std::vector<double>{7, 6, 9}, 0.0);
    REQUIRE(s.size() == 3);
    CHECK(s[0].segment_index == 3);
    CHECK(s[1].segment_index == 1);
    CHECK(s[2].segment_index == 2);
  }
  SUBCASE("raising the threshold never adds shapelets") {
    const std::vector<double> e{0.5, 4, 2.5};
    std::size_t previous = segs.size() + 1;
    for (double t = -1.0; t < 5.0; t += 0.25) {
      const auto n = select_shapelets(segs, e, t).size();
      CHECK(n <= previous);
      previous = n;
    }
  }
  CHECK_THROWS_AS(select_shapelets(segs, std::vector<double>{1}, 0.0), ArgumentError);
}

TEST_CASE("energy at a component mean is the Gaussian constant") {
  const auto model = zero_model(2);
  TimeSeries zeros{"z", std::vector<double>(13, 0.0), Label::Normal, 1};
  const auto scores = score_segments(zeros, model);
  REQUIRE(scores.size() == 2);
  for (double s : scores) CHECK(s == doctest::Approx(2.5 * std::log(2 * M_PI)).epsilon(1e-12));
}

TEST_CASE("series too short for the model") {
  const auto model = zero_model(4);
  TimeSeries tiny{"t", {1, 2, 3, 4, 5}, Label::Normal, 1};
  CHECK_THROWS_AS(score_segments(tiny, model), ArgumentError);
}

TEST_CASE("scoring a trained model") {
  const auto& model = small_model().model;
  const auto test = small_test();
  const auto reports = score_dataset(test, model, Aggregation::Max, 0.95);
  REQUIRE(reports.size() == test.size());
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    CHECK(r.series_id == test.series[i].id);
    CHECK(r.segment_scores.size() == 3);
    CHECK(r.spans.size() == 3);
    CHECK(r.spans.front().first == 1);
    CHECK(r.spans.back().second == static_cast<int>(test.series[i].size()));
    CHECK(r.series_score == score_series(r.segment_scores, Aggregation::Max));
    const double threshold = quantile_sorted(model.train_energies, 0.95);
    for (const auto& s : r.shapelets) CHECK(s.score > threshold);
  }
  SUBCASE("repeated scoring is bit-identical") {
    const auto again = score_dataset(test, model, Aggregation::Max, 0.95);
    for (std::size_t i = 0; i < reports.size(); ++i) CHECK(again[i].segment_scores == reports[i].segment_scores);
  }
  SUBCASE("bad quantile") { CHECK_THROWS_AS(localize_shapelets(test.series[0], model, 1.0), ArgumentError); }
}

TEST_CASE("principal projection") {
  std::vector<Vector> pts;
  for (int i = 0; i < 12; ++i) {
    Vector p(2);
    p << std::cos(0.7 * i) * (1 + 0.3 * i), std::sin(1.3 * i) - 0.1 * i;
    pts.push_back(p);
  }
  const Matrix proj = principal_projection(pts, 2);
  REQUIRE(proj.rows() == 12);
  REQUIRE(proj.cols() == 2);
  Vector mean = Vector::Zero(2);
  for (const auto& p : pts) mean += p;
  mean /= 12.0;
  for (int i = 0; i < 12; ++i) {
    CHECK(proj.row(i).norm() == doctest::Approx((pts[static_cast<std::size_t>(i)] - mean).norm()).epsilon(1e-9));
  }
  // The first axis carries at least as much variance as the second.
  CHECK(proj.col(0).squaredNorm() >= proj.col(1).squaredNorm());
  CHECK_THROWS_AS(principal_projection(pts, 3), ArgumentError);
}

TEST_CASE("latent export and writers") {
  const auto& model = small_model().model;
  const auto test = small_test();
  const auto rows = export_latent(test, model);
  CHECK(rows.size() == 3 * test.size());
  CHECK(rows[0].y.size() == model.networks.hidden() + 2);

  TempDir dir;
  const auto reports = score_dataset(test, model, Aggregation::Max, 0.95);
  write_reports_jsonl(dir.path() / "r.jsonl", reports);
  write_scores_csv(dir.path() / "r.csv", reports);
  write_latent_csv(dir.path() / "l.csv", rows);
  CHECK(count_lines(dir.path() / "r.jsonl") == test.size());
  CHECK(count_lines(dir.path() / "r.csv") == test.size() + 1);
  CHECK(count_lines(dir.path() / "l.csv") == rows.size() + 1);

  std::ifstream in(dir.path() / "r.jsonl");
  std::string line;
  std::getline(in, line);
  auto j = nlohmann::json::parse(line);
  CHECK(j.at("series_id") == test.series[0].id);
  CHECK(j.at("segment_scores").size() == 3);
}
