#include <cmath>

#include "doctest.h"
#include "gradcheck.hpp"
#include "seq2gmm/errors.hpp"
#include "seq2gmm/trainer.hpp"

using namespace seq2gmm;

namespace {

Dataset small_sine() { return znormalize(synthesize_dataset(SynthConfig{24, 8, 0, 4, 8, 4, 1.0, 3})); }

TrainingConfig tiny_config() {
  TrainingConfig c;
  c.K = 2;
  c.hidden = 3;
  c.estimator_width = 4;
  c.rounds = 2;
  c.pretrain_epochs = 3;
  c.batch_size = 8;
  c.num_segments = 2;
  c.seed = 5;
  return c;
}

GmmParams unit_mixture(int K, int d) {
  GmmParams g;
  g.phi = Vector::Constant(K, 1.0 / K);
  for (int k = 0; k < K; ++k) {
    g.mu.push_back(Vector::Constant(d, 0.3 * k));
    g.sigma.push_back(Matrix::Identity(d, d) * (1.0 + 0.5 * k));
  }
  return g;
}

bool same_params(const NetworkParams& a, const NetworkParams& b) {
  auto pa = parameter_blocks(a);
  auto pb = parameter_blocks(b);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (*pa[i].second != *pb[i].second) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("segment_dataset cuts every series into M pieces") {
  auto d = small_sine();
  auto segs = segment_dataset(d, 3);
  CHECK(segs.size() == 3 * d.size());
  CHECK(segs[0].series_id == d.series[0].id);
}

TEST_CASE("joint loss with lambda 0 is the reconstruction loss") {
  auto segs = segment_dataset(small_sine(), 2);
  std::vector<Segment> batch(segs.begin(), segs.begin() + 5);
  auto params = init_network(3, 4, 2, 1);
  randomize(params, 4, 0.3);
  auto loss = joint_loss(batch, params, unit_mixture(2, 5), 0.0);
  CHECK(loss.total == doctest::Approx(reconstruction_objective(batch, params)).epsilon(1e-12));
  CHECK(loss.reconstruction == doctest::Approx(loss.total).epsilon(1e-12));
}

TEST_CASE("joint loss closed form at a component mean") {
  // Zero networks reconstruct a zero segment exactly and map it to y = 0.
  auto params = init_network(3, 4, 1, 1);
  for (auto& [name, m] : parameter_blocks(params)) m->setZero();
  std::vector<Segment> batch{{"s", 1, 1, 6, std::vector<double>(6, 0.0)}};
  GmmParams g;
  g.phi = Vector::Ones(1);
  g.mu = {Vector::Zero(5)};
  g.sigma = {Matrix::Identity(5, 5)};
  auto loss = joint_loss(batch, params, g, 0.25);
  CHECK(loss.reconstruction == 0.0);
  CHECK(loss.total == doctest::Approx(0.25 * 2.5 * std::log(2 * M_PI)).epsilon(1e-12));
}

TEST_CASE("joint loss gradients") {
  auto segs = segment_dataset(small_sine(), 2);
  std::vector<Segment> batch(segs.begin(), segs.begin() + 3);
  auto params = init_network(3, 4, 2, 1);
  randomize(params, 12, 0.4);
  const auto g = unit_mixture(2, 5);
  auto loss = [&](NetworkParams& p, NetworkParams* grads) {
    return joint_loss(batch, p, g, 0.7, grads).total;
  };
  std::string block;
  const double err = gradient_check(params, loss, &block);
  CAPTURE(block);
  CHECK(err < 1e-4);
}

TEST_CASE("reconstruction gradients with scaling") {
  auto segs = segment_dataset(small_sine(), 2);
  std::vector<Segment> batch(segs.begin(), segs.begin() + 2);
  auto params = init_network(3, 4, 2, 2);
  randomize(params, 6, 0.4);
  auto loss = [&](NetworkParams& p, NetworkParams* grads) {
    return 0.5 * reconstruction_objective(batch, p, grads, 0.5);
  };
  CHECK(gradient_check(params, loss) < 1e-4);
}

TEST_CASE("pretraining") {
  SUBCASE("zero segments are learned to near zero loss") {
    std::vector<Segment> zeros(6, Segment{"z", 1, 1, 8, std::vector<double>(8, 0.0)});
    auto c = tiny_config();
    c.pretrain_epochs = 5;
    std::vector<double> losses;
    pretrain_autoencoder(zeros, c, &losses);
    REQUIRE(losses.size() == 5);
    CHECK(losses.back() < 1e-4);
  }
  SUBCASE("seeded and loss decreases on sine segments") {
    auto segs = segment_dataset(small_sine(), 2);
    auto c = tiny_config();
    c.pretrain_epochs = 15;
    c.eta0 = 0.05;
    std::vector<double> losses;
    auto a = pretrain_autoencoder(segs, c, &losses);
    auto b = pretrain_autoencoder(segs, c);
    CHECK(same_params(a, b));
    CHECK(losses.back() < losses.front());
  }
}

TEST_CASE("surrogate training") {
  auto d = small_sine();
  auto c = tiny_config();
  auto result = surrogate_train(d, c);
  const auto& trace = result.trace;
  REQUIRE(trace.rounds.size() == 2);
  for (const auto& r : trace.rounds) {
    CHECK(std::isfinite(r.objective));
    CHECK(r.em_energy_after <= r.em_energy_before);
    CHECK(r.bound_lower == result.model.pretrain_objective);
    CHECK(r.bound_upper == r.objective);
  }
  CHECK(result.model.gmm.K() == 2);
  CHECK(result.model.num_segments == 2);
  CHECK(result.model.train_energies.size() == 2 * d.size());
  CHECK(std::is_sorted(result.model.train_energies.begin(), result.model.train_energies.end()));
  CHECK_NOTHROW(validate_gmm(result.model.gmm));

  SUBCASE("bit-identical for the same seed") {
    auto again = surrogate_train(d, c);
    CHECK(same_params(result.model.networks, again.model.networks));
    CHECK(result.model.gmm.mu[0] == again.model.gmm.mu[0]);
    CHECK(result.model.train_energies == again.model.train_energies);
  }
  SUBCASE("bounds evaluate the stored objective") {
    auto b = objective_bounds(d, result.model);
    CHECK(b.lower == result.model.pretrain_objective);
    CHECK(b.upper == doctest::Approx(full_objective(segment_dataset(d, 2), result.model).total));
  }
}

TEST_CASE("no rounds reduces to pretraining plus one EM fit") {
  auto d = small_sine();
  auto c = tiny_config();
  c.rounds = 0;
  c.lambda = 0.0;
  auto result = surrogate_train(d, c);
  auto segs = segment_dataset(d, 2);
  auto pre = pretrain_autoencoder(segs, c);
  CHECK(same_params(result.model.networks, pre));
  REQUIRE(result.trace.rounds.size() == 1);
  CHECK(result.trace.rounds[0].bound_lower == reconstruction_objective(segs, pre));
  auto ys = compute_latents(segs, pre);
  CHECK(mean_energy(ys, result.model.gmm) == doctest::Approx(result.trace.rounds[0].em_energy_after).epsilon(1e-12));
}

TEST_CASE("automatic choices") {
  auto d = small_sine();
  auto c = tiny_config();
  c.K = 0;
  c.k_candidates = {1, 2};
  c.num_segments = 0;
  c.max_segments = 3;
  c.rounds = 1;
  auto result = train_model(d, c);
  REQUIRE(result.trace.k_selection.size() == 2);
  const int K = result.model.gmm.K();
  CHECK((K == 1 || K == 2));
  CHECK(result.model.num_segments >= 1);
  CHECK(result.model.num_segments <= 3);
  CHECK(!result.trace.m_selection_scores.empty());
}

TEST_CASE("configuration checks") {
  auto c = tiny_config();
  c.lambda = -1;
  CHECK_THROWS_AS(validate_config(c), ConfigError);
  c = tiny_config();
  c.batch_size = 0;
  CHECK_THROWS_AS(validate_config(c), ConfigError);
  c = tiny_config();
  c.K = 40;
  CHECK_THROWS_AS(surrogate_train(small_sine(), c), ArgumentError);
}

TEST_CASE("config json round trip") {
  auto c = tiny_config();
  c.k_candidates = {3, 4};
  c.eps = 1e-5;
  TrainingConfig back = nlohmann::json(c).get<TrainingConfig>();
  CHECK(back.K == c.K);
  CHECK(back.k_candidates == c.k_candidates);
  CHECK(back.eps == c.eps);
  CHECK(back.seed == c.seed);
  CHECK(back.grad_clip == c.grad_clip);
}
