#include <cmath>

#include "doctest.h"
#include "gradcheck.hpp"
#include "seq2gmm/errors.hpp"
#include "seq2gmm/networks.hpp"

using namespace seq2gmm;

namespace {

std::vector<double> wave(int L, double phase = 0.0) {
  std::vector<double> s;
  for (int i = 0; i < L; ++i) s.push_back(std::sin(0.7 * i + phase) + 0.1 * i);
  return s;
}

Matrix weights(Eigen::Index r, Eigen::Index c, double phase) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std::cos(1.3 * static_cast<double>(i) + phase);
  return m;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// GRU recurrence written out element by element.
std::vector<double> reference_gru(const GruParams& p, const std::vector<double>& x, const std::vector<double>& h) {
  const int H = p.hidden();
  std::vector<double> out(static_cast<std::size_t>(H));
  auto gate = [&](const Matrix& w, const Matrix& b, int row, const std::vector<double>& v) {
    double s = b(row, 0);
    for (std::size_t j = 0; j < v.size(); ++j) s += w(row, static_cast<Eigen::Index>(j)) * v[j];
    return s;
  };
  for (int i = 0; i < H; ++i) {
    const double r = sigmoid(gate(p.w_x, p.b_x, i, x) + gate(p.w_h, p.b_h, i, h));
    const double z = sigmoid(gate(p.w_x, p.b_x, H + i, x) + gate(p.w_h, p.b_h, H + i, h));
    const double n = std::tanh(gate(p.w_x, p.b_x, 2 * H + i, x) + r * gate(p.w_h, p.b_h, 2 * H + i, h));
    out[static_cast<std::size_t>(i)] = (1 - z) * n + z * h[static_cast<std::size_t>(i)];
  }
  return out;
}

}  // namespace

TEST_CASE("encoder gradients") {
  for (int H : {3, 8}) {
    for (int L : {1, 5, 12}) {
      auto params = init_network(H, 4, 3, 7);
      randomize(params, 100 + static_cast<std::uint64_t>(H * L));
      const auto s = wave(L);
      const Matrix w_states = weights(H, L, 0.2);
      const Matrix w_final = weights(H, 1, 0.9);
      auto loss = [&](NetworkParams& p, NetworkParams* g) {
        ad::Tape tape;
        auto vars = bind(tape, p, g);
        auto enc = encode(tape, vars.encoder, s);
        ad::Var out = ad::dot(enc.s_o, tape.constant(w_states)) + ad::dot(enc.h_c, tape.constant(w_final));
        if (g) tape.backward(out);
        return out.scalar();
      };
      std::string block;
      const double err = gradient_check(params, loss, &block);
      CAPTURE(H);
      CAPTURE(L);
      CAPTURE(block);
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("decoder-with-attention gradients through the full latent") {
  for (int H : {2, 6}) {
    for (int L : {2, 7, 12}) {
      auto params = init_network(H, 4, 3, 9);
      randomize(params, 200 + static_cast<std::uint64_t>(H * L), 1.0);
      const auto s = wave(L, 0.4);
      const Matrix w_y = weights(H + 2, 1, 1.1);
      auto loss = [&](NetworkParams& p, NetworkParams* g) {
        ad::Tape tape;
        auto vars = bind(tape, p, g);
        auto trace = latent_forward(tape, vars, s);
        ad::Var out = reconstruction_loss(trace) + ad::dot(trace.y, tape.constant(w_y));
        if (g) tape.backward(out);
        return out.scalar();
      };
      std::string block;
      const double err = gradient_check(params, loss, &block);
      CAPTURE(H);
      CAPTURE(L);
      CAPTURE(block);
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("estimator gradients") {
  for (int K : {2, 5}) {
    auto params = init_network(4, 6, K, 3);
    randomize(params, 300 + static_cast<std::uint64_t>(K));
    const Matrix y = weights(6, 1, 0.3);
    const Matrix w = weights(K, 1, 2.0);
    auto loss = [&](NetworkParams& p, NetworkParams* g) {
      ad::Tape tape;
      auto vars = bind(tape, p, g);
      ad::Var gamma = estimate_membership(vars.estimator, tape.constant(y));
      ad::Var out = ad::dot(ad::log(gamma), tape.constant(w));
      if (g) tape.backward(out);
      return out.scalar();
    };
    std::string block;
    CAPTURE(K);
    CHECK(gradient_check(params, loss, &block) < 1e-4);
  }
}

TEST_CASE("value-level forward matches an element-wise GRU and the tape") {
  auto params = init_network(5, 4, 2, 1);
  randomize(params, 77);
  const auto s = wave(9);
  auto enc = encode(s, params.encoder);
  std::vector<double> h(5, 0.0);
  for (std::size_t t = 0; t < s.size(); ++t) {
    h = reference_gru(params.encoder.gru, {s[t]}, h);
    for (int i = 0; i < 5; ++i) CHECK(enc.s_o(static_cast<Eigen::Index>(t), i) == doctest::Approx(h[static_cast<std::size_t>(i)]).epsilon(1e-12));
  }
  for (int i = 0; i < 5; ++i) CHECK(enc.h_c(i) == doctest::Approx(h[static_cast<std::size_t>(i)]).epsilon(1e-12));

  ad::Tape tape;
  auto vars = bind(tape, params, nullptr);
  auto trace = latent_forward(tape, vars, s);
  auto rep = latent_representation(s, params.encoder, params.decoder);
  CHECK((trace.y.value().col(0) - rep.y).norm() < 1e-12);
  CHECK((trace.reconstruction.value().col(0) - rep.reconstruction).norm() < 1e-12);
  auto dec = decode_attentive(rep.h_c, rep.s_o, params.decoder, 9);
  CHECK((dec.attention - trace.attention).norm() < 1e-12);

  const Vector gamma = estimate_membership(rep.y, params.estimator);
  ad::Tape t2;
  auto v2 = bind(t2, params, nullptr);
  CHECK((estimate_membership(v2.estimator, t2.constant(rep.y)).value().col(0) - gamma).norm() < 1e-12);
}

TEST_CASE("encoder with zero weights stays at the origin") {
  auto params = init_network(4, 3, 2, 1);
  for (auto& [name, m] : parameter_blocks(params)) m->setZero();
  auto enc = encode(wave(6), params.encoder);
  CHECK(enc.h_c.norm() == 0.0);
  CHECK(enc.s_o.rows() == 6);
  CHECK(enc.s_o.cols() == 4);
  CHECK_THROWS_AS(encode(std::vector<double>{}, params.encoder), ArgumentError);
  CHECK_THROWS_AS(encode(std::vector<double>{1.0, std::nan("")}, params.encoder), NumericalError);
}

TEST_CASE("attention rows are distributions and any length is accepted") {
  auto params = init_network(4, 3, 2, 5);
  randomize(params, 5);
  for (int L : {1, 2, 13, 40}) {
    auto rep = latent_representation(wave(L), params.encoder, params.decoder);
    CHECK(rep.reconstruction.size() == L);
    CHECK(rep.y.size() == 6);
    auto dec = decode_attentive(rep.h_c, rep.s_o, params.decoder, L + 3);
    CHECK(dec.attention.rows() == L + 3);
    for (Eigen::Index t = 0; t < dec.attention.rows(); ++t) {
      CHECK(dec.attention.row(t).sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(dec.attention.row(t).minCoeff() >= 0.0);
    }
  }
  auto rep = latent_representation(wave(4), params.encoder, params.decoder);
  CHECK_THROWS_AS(decode_attentive(rep.h_c, rep.s_o, params.decoder, 0), ArgumentError);
}

TEST_CASE("reconstruction features") {
  std::vector<double> s{1, -2, 3, 0.5};
  auto same = reconstruction_features(s, s);
  CHECK(same(0) == doctest::Approx(0.0));
  CHECK(same(1) == doctest::Approx(1.0));
  std::vector<double> neg{-1, 2, -3, -0.5};
  CHECK(reconstruction_features(s, neg)(1) == doctest::Approx(-1.0));
  std::vector<double> zero(4, 0.0);
  auto z = reconstruction_features(s, zero);
  CHECK(z(1) == 0.0);
  CHECK(z(0) == doctest::Approx(std::sqrt((1 + 4 + 9 + 0.25) / 4.0)));
  CHECK_THROWS_AS(reconstruction_features(s, std::vector<double>{1, 2}), ArgumentError);
}

TEST_CASE("latent representation invariants and determinism") {
  auto params = init_network(8, 10, 2, 4);
  randomize(params, 8, 0.3);
  auto a = latent_representation(wave(11), params.encoder, params.decoder);
  auto b = latent_representation(wave(11), params.encoder, params.decoder);
  CHECK(a.y == b.y);
  CHECK(a.y.size() == 10);
  CHECK(a.euclidean_error >= 0.0);
  CHECK(a.cosine_similarity >= -1.0);
  CHECK(a.cosine_similarity <= 1.0);
  CHECK(a.y(8) == a.euclidean_error);
  CHECK(a.y(9) == a.cosine_similarity);
}

TEST_CASE("membership estimates") {
  auto params = init_network(4, 5, 3, 2);
  randomize(params, 3);
  Vector y = weights(6, 1, 0.1).col(0);
  CHECK(estimate_membership(y, params.estimator).sum() == doctest::Approx(1.0).epsilon(1e-9));
  for (auto* m : {&params.estimator.w1, &params.estimator.b1, &params.estimator.w2, &params.estimator.b2}) m->setZero();
  auto uniform = estimate_membership(y, params.estimator);
  for (int k = 0; k < 3; ++k) CHECK(uniform(k) == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(estimate_membership(Vector::Zero(3), params.estimator), ArgumentError);
}

TEST_CASE("initialization") {
  auto a = init_network(8, 10, 5, 42);
  auto b = init_network(8, 10, 5, 42);
  auto pa = parameter_blocks(a);
  auto pb = parameter_blocks(b);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(*pa[i].second == *pb[i].second);
    CHECK(pa[i].second->cwiseAbs().maxCoeff() < 0.08);
  }
  CHECK(a.decoder.gru.input() == 9);
  CHECK(a.estimator.w1.cols() == 10);
  CHECK(a.estimator.components() == 5);
  CHECK(init_network(8, 10, 5, 43).encoder.gru.w_x != a.encoder.gru.w_x);
}

TEST_CASE("sgd step") {
  auto params = init_network(2, 2, 2, 1);
  auto before = params;
  auto grads = zeros_like(params);
  sgd_step(params, grads, 0.1);
  CHECK(params.decoder.att_v == before.decoder.att_v);
  params.decoder.out_b(0, 0) = 1.0;
  grads.decoder.out_b(0, 0) = 2.0;
  sgd_step(params, grads, 0.1);
  CHECK(params.decoder.out_b(0, 0) == doctest::Approx(0.8));
  grads.encoder.gru.w_h(0, 0) = std::nan("");
  try {
    sgd_step(params, grads, 0.1);
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("encoder.gru.w_h") != std::string::npos);
  }
  CHECK(learning_rate(0.01, 0.01, 0) == doctest::Approx(0.01));
  CHECK(learning_rate(0.01, 0.01, 100) == doctest::Approx(0.005));
}

TEST_CASE("parameter json round trip is exact") {
  auto params = init_network(3, 4, 2, 6);
  NetworkParams back = nlohmann::json(params).get<NetworkParams>();
  auto a = parameter_blocks(params);
  auto b = parameter_blocks(back);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i].second == *b[i].second);
}
