#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "seq2gmm/errors.hpp"
#include "seq2gmm/metrics.hpp"
#include "seq2gmm/random.hpp"

using namespace seq2gmm;

namespace {

struct Instance {
  std::vector<double> scores;
  std::vector<Label> labels;
  std::vector<bool> anomaly;
};

Instance random_instance(std::uint64_t seed, int n = 12) {
  Rng rng(seed);
  Instance in;
  for (int i = 0; i < n; ++i) {
    const bool a = i % 3 == 0;
    // Coarse grid so ties occur.
    in.scores.push_back(std::floor(uniform01(rng) * 6.0) + (a ? 1.0 : 0.0));
    in.labels.push_back(a ? Label::Anomaly : Label::Normal);
    in.anomaly.push_back(a);
  }
  return in;
}

}  // namespace

TEST_CASE("AUC") {
  std::vector<Label> labels{Label::Normal, Label::Normal, Label::Anomaly, Label::Anomaly};
  CHECK(auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, labels) == 1.0);
  CHECK(auc(std::vector<double>{1, 1, 1, 1}, labels) == 0.5);
  CHECK(auc(std::vector<double>{0.9, 0.8, 0.1, 0.2}, labels) == 0.0);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto in = random_instance(seed);
    CHECK(auc(in.scores, in.labels) == doctest::Approx(oracle::pair_count_auc(in.scores, in.anomaly)).epsilon(1e-12));
  }
  std::vector<Label> one_class(4, Label::Normal);
  CHECK_THROWS_AS(auc(std::vector<double>{1, 2, 3, 4}, one_class), MetricError);
  CHECK_THROWS_AS(auc(std::vector<double>{1, 2}, labels), MetricError);
}

TEST_CASE("AUC is a rank statistic") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto in = random_instance(seed, 15);
    std::vector<double> transformed;
    for (double s : in.scores) transformed.push_back(std::exp(0.7 * s) - 3.0);
    CHECK(auc(transformed, in.labels) == auc(in.scores, in.labels));
  }
}

TEST_CASE("AUPR") {
  std::vector<Label> labels{Label::Normal, Label::Normal, Label::Anomaly, Label::Anomaly};
  CHECK(aupr(std::vector<double>{0.1, 0.2, 0.8, 0.9}, labels) == doctest::Approx(1.0));
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto in = random_instance(seed);
    CHECK(std::abs(aupr(in.scores, in.labels) - oracle::threshold_sweep_aupr(in.scores, in.anomaly)) <= 1e-9);
  }
  std::vector<Label> all_anomalies(3, Label::Anomaly);
  CHECK_THROWS_AS(aupr(std::vector<double>{1, 2, 3}, all_anomalies), MetricError);
}

TEST_CASE("summary statistics") {
  std::vector<double> v{1, 2, 3, 4};
  CHECK(mean(v) == 2.5);
  CHECK(stddev(v) == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(stddev(std::vector<double>{0.7}) == 0.0);
  MetricResult r;
  r.auc_runs = {0.9};
  r.aupr_runs = {0.8};
  CHECK(r.n_runs() == 1);
  CHECK(r.auc_sd() == 0.0);
  CHECK(r.auc_mean() == 0.9);
  nlohmann::json j = r;
  CHECK(j["auc_runs"].size() == 1);
}
