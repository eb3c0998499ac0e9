#include <cmath>
#include <map>
#include <numeric>

#include "doctest.h"
#include "oracles.hpp"
#include "seq2gmm/dataio.hpp"
#include "seq2gmm/errors.hpp"
#include "seq2gmm/random.hpp"
#include "seq2gmm/segmentation.hpp"

using namespace seq2gmm;

namespace {

std::vector<double> random_series(int length, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> s(static_cast<std::size_t>(length));
  double level = 0.0;
  for (auto& v : s) {
    level += uniform01(rng) - 0.5;
    v = level + 0.3 * (uniform01(rng) - 0.5);
  }
  return s;
}

TimeSeries series_of(std::vector<double> values) { return {"s", std::move(values), std::nullopt, std::nullopt}; }

}  // namespace

TEST_CASE("regression matrix columns") {
  auto A = regression_matrix(4, {1, 4});
  CHECK(A.rows() == 4);
  CHECK(A.cols() == 2);
  for (int i = 0; i < 4; ++i) {
    CHECK(A(i, 0) == 1.0);
    CHECK(A(i, 1) == i);
  }
  auto B = regression_matrix(5, {1, 3, 5});
  std::vector<double> third{0, 0, 0, 1, 2};
  for (int i = 0; i < 5; ++i) CHECK(B(i, 2) == third[static_cast<std::size_t>(i)]);
  CHECK_THROWS_AS(regression_matrix(5, {1, 3, 3, 5}), ArgumentError);
  CHECK_THROWS_AS(regression_matrix(5, {2, 5}), ArgumentError);
}

TEST_CASE("exact piecewise fits") {
  std::vector<double> line{1, 2, 3, 4};
  auto fit = fit_piecewise(line, {1, 4});
  CHECK(fit.beta(0) == doctest::Approx(1.0));
  CHECK(fit.beta(1) == doctest::Approx(1.0));
  CHECK(fit.residual_sse == doctest::Approx(0.0).epsilon(1e-12));

  std::vector<double> tent{0, 1, 2, 1, 0};
  auto two = fit_piecewise(tent, {1, 3, 5});
  CHECK(two.beta(0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(two.beta(1) == doctest::Approx(1.0));
  CHECK(two.beta(2) == doctest::Approx(-2.0));
  CHECK(two.residual_sse < 1e-20);
  auto curve = piecewise_curve(5, {1, 3, 5}, two.beta);
  for (std::size_t i = 0; i < 5; ++i) CHECK(curve[i] == doctest::Approx(tent[i]));
}

TEST_CASE("residual is orthogonal to the column space") {
  auto s = random_series(25, 3);
  std::vector<int> b{1, 7, 15, 25};
  auto fit = fit_piecewise(s, b);
  auto A = regression_matrix(25, b);
  Eigen::Map<const Eigen::VectorXd> sv(s.data(), 25);
  Eigen::VectorXd e = A * fit.beta - sv;
  CHECK((A.transpose() * e).norm() <= 1e-6 * sv.norm());
  CHECK(fit.residual_sse == doctest::Approx(oracle::piecewise_sse(s, b)).epsilon(1e-9));
}

TEST_CASE("greedy breakpoints on the tent") {
  std::vector<double> tent{0, 1, 2, 1, 0};
  auto m = optimize_breakpoints(tent, 2);
  CHECK(m.breakpoints == std::vector<int>{1, 3, 5});
  CHECK(m.residual_sse < 1e-20);

  auto one = optimize_breakpoints(tent, 1);
  CHECK(one.breakpoints == std::vector<int>{1, 5});
  CHECK_THROWS_AS(optimize_breakpoints(tent, 3), ArgumentError);
  CHECK_THROWS_AS(optimize_breakpoints(tent, 0), ArgumentError);
}

TEST_CASE("greedy matches the reference greedy and never beats the exhaustive optimum") {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    const int L = 12 + static_cast<int>(seed % 4) * 6;  // 12..30
    const int M = 2 + static_cast<int>(seed % 2);
    auto s = random_series(L, seed);
    CAPTURE(seed);
    std::vector<int> ref_b;
    const double ref = oracle::greedy_breakpoints(s, M, kMinBreakpointGap, &ref_b);
    auto model = optimize_breakpoints(s, M);
    CHECK(model.breakpoints == ref_b);
    CHECK(std::abs(model.residual_sse - ref) <= 1e-9 * std::max(1.0, ref));
    CHECK(model.residual_sse >= oracle::exhaustive_breakpoints(s, M, kMinBreakpointGap) - 1e-9);
  }
}

TEST_CASE("greedy SSE trace never increases") {
  auto s = random_series(60, 17);
  std::vector<double> trace;
  auto m = optimize_breakpoints(s, 6, &trace);
  REQUIRE(trace.size() == 6);
  for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-12);
  CHECK(m.residual_sse == doctest::Approx(trace.back()));
}

TEST_CASE("a single kink is recovered exactly") {
  std::vector<double> s;
  for (int i = 1; i <= 30; ++i) s.push_back(i <= 12 ? 0.5 * i : 6.0 - 1.5 * (i - 12));
  auto m = optimize_breakpoints(s, 2);
  CHECK(m.breakpoints == std::vector<int>{1, 12, 30});
  CHECK(m.residual_sse <= 1e-9);
}

TEST_CASE("Calinski-Harabasz") {
  std::vector<Eigen::VectorXd> pts;
  for (double v : {0.0, 0.1, 10.0, 10.1}) pts.push_back(Eigen::VectorXd::Constant(1, v));
  CHECK(calinski_harabasz(pts, {0, 0, 1, 1}) == doctest::Approx(20000.0).epsilon(1e-9));
  CHECK(std::isinf(calinski_harabasz(pts, {0, 1, 2, 3})));
  CHECK(std::isinf(calinski_harabasz(pts, {0, 0, 0, 0})));
}

TEST_CASE("first-decrease rule") {
  std::map<int, double> mocked{{2, 5.0}, {3, 9.0}, {4, 7.0}};
  CHECK(select_first_decrease([&](int m) { return mocked.at(m); }, 4) == 3);
  CHECK(select_first_decrease([](int m) { return static_cast<double>(m); }, 4) == 4);
}

TEST_CASE("M selection runs end to end and respects the cap") {
  auto d = synthesize_dataset({60, 8, 0, 5, 5, 4, 1.0, 2});
  std::vector<double> scores;
  const int M = select_num_segments(d, 4, 16, 1, &scores);
  CHECK(M >= 1);
  CHECK(M <= 4);
  CHECK(!scores.empty());
}

TEST_CASE("resampling keeps the end points") {
  std::vector<double> v{0, 2, 4, 6};
  auto r = resample_linear(v, 7);
  REQUIRE(r.size() == 7);
  CHECK(r.front() == 0.0);
  CHECK(r.back() == 6.0);
  CHECK(r[3] == doctest::Approx(3.0));
}

TEST_CASE("split_series boundary rule") {
  std::vector<double> v(10);
  std::iota(v.begin(), v.end(), 1.0);
  SegmentationModel m;
  m.num_segments = 2;
  m.breakpoints = {1, 5, 10};
  auto segs = split_series(series_of(v), m);
  REQUIRE(segs.size() == 2);
  CHECK(segs[0].start == 1);
  CHECK(segs[0].end == 5);
  CHECK(segs[1].start == 6);
  CHECK(segs[1].end == 10);
  CHECK(segs[0].values.size() == 5);
  CHECK(segs[1].values.size() == 5);

  SegmentationModel whole;
  whole.breakpoints = {1, 10};
  auto one = split_series(series_of(v), whole);
  REQUIRE(one.size() == 1);
  CHECK(one[0].values == v);

  m.breakpoints = {1, 5, 12};
  CHECK_THROWS_AS(split_series(series_of(v), m), ArgumentError);
}

TEST_CASE("segments tile the series") {
  auto s = random_series(50, 5);
  auto m = optimize_breakpoints(s, 5);
  auto segs = split_series(series_of(s), m);
  std::vector<double> joined;
  for (const auto& seg : segs) joined.insert(joined.end(), seg.values.begin(), seg.values.end());
  CHECK(joined == s);
  for (const auto& seg : segs) CHECK(seg.values.size() >= 2);
}
