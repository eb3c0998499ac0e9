#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "seq2gmm/autodiff.hpp"

namespace seq2gmm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Gated recurrent unit weights. Gate rows are stacked [reset; update; candidate].
///   r = sigmoid(Wx_r x + bx_r + Wh_r h + bh_r)
///   z = sigmoid(Wx_z x + bx_z + Wh_z h + bh_z)
///   n = tanh(Wx_n x + bx_n + r * (Wh_n h + bh_n))
///   h' = (1 - z) * n + z * h
struct GruParams {
  Matrix w_x;  ///< 3H x input
  Matrix w_h;  ///< 3H x H
  Matrix b_x;  ///< 3H x 1
  Matrix b_h;  ///< 3H x 1

  int hidden() const { return static_cast<int>(w_h.cols()); }
  int input() const { return static_cast<int>(w_x.cols()); }
};

struct EncoderParams {
  GruParams gru;  ///< input dimension 1
  int hidden() const { return gru.hidden(); }
};

/// Attentive decoder. Each step scores the encoder outputs with
/// v^T tanh(W_dec h_{t-1} + W_enc s_j), feeds [previous sample; context] to the GRU and
/// projects the new state to one output sample.
struct DecoderParams {
  GruParams gru;   ///< input dimension H + 1
  Matrix att_dec;  ///< H x H
  Matrix att_enc;  ///< H x H
  Matrix att_v;    ///< 1 x H
  Matrix out_w;    ///< 1 x H
  Matrix out_b;    ///< 1 x 1
};

/// Feed-forward membership estimator: softmax(W2 tanh(W1 y + b1) + b2).
struct EstimatorParams {
  Matrix w1;  ///< D_E x (H + 2)
  Matrix b1;  ///< D_E x 1
  Matrix w2;  ///< K x D_E
  Matrix b2;  ///< K x 1

  int components() const { return static_cast<int>(w2.rows()); }
};

struct NetworkParams {
  EncoderParams encoder;
  DecoderParams decoder;
  EstimatorParams estimator;

  int hidden() const { return encoder.hidden(); }
};

/// Named views of every trainable block, in a fixed order.
std::vector<std::pair<std::string, Matrix*>> parameter_blocks(NetworkParams& params);
std::vector<std::pair<std::string, const Matrix*>> parameter_blocks(const NetworkParams& params);

/// Same shapes, all zeros.
NetworkParams zeros_like(const NetworkParams& params);

/// Weights uniform in (-0.08, 0.08), biases zero.
NetworkParams init_network(int hidden, int estimator_width, int components, std::uint64_t seed);

bool all_finite(const NetworkParams& params);

// ---------------------------------------------------------------------------
// Tape-level building blocks (used for training and gradient checks).

struct GruVars {
  ad::Var w_x, w_h, b_x, b_h;
};
struct EncoderVars {
  GruVars gru;
};
struct DecoderVars {
  GruVars gru;
  ad::Var att_dec, att_enc, att_v, out_w, out_b;
};
struct EstimatorVars {
  ad::Var w1, b1, w2, b2;
};
struct NetworkVars {
  EncoderVars encoder;
  DecoderVars decoder;
  EstimatorVars estimator;
};

/// Places the parameters on the tape. With `grads` non-null their adjoints accumulate there;
/// otherwise they are constants.
NetworkVars bind(ad::Tape& tape, const NetworkParams& params, NetworkParams* grads);

ad::Var gru_step(const GruVars& gru, const ad::Var& x, const ad::Var& h);

struct EncoderTrace {
  ad::Var h_c;  ///< H x 1, final hidden state
  ad::Var s_o;  ///< H x L, hidden state after every step
};
EncoderTrace encode(ad::Tape& tape, const EncoderVars& enc, std::span<const double> segment);

struct DecoderTrace {
  ad::Var output;    ///< target_len x 1
  Matrix attention;  ///< target_len x L, row t = weights used at step t
};
DecoderTrace decode_attentive(ad::Tape& tape, const DecoderVars& dec, const ad::Var& h_c, const ad::Var& s_o,
                              int target_len);

/// (||s - s'|| / sqrt(L), cos(s, s')) as a 2 x 1 node. Cosine is 0 when either vector is zero.
ad::Var reconstruction_features(ad::Tape& tape, const ad::Var& s, const ad::Var& s_prime);

struct LatentTrace {
  ad::Var input;           ///< L x 1 constant
  ad::Var reconstruction;  ///< L x 1
  ad::Var h_c;
  ad::Var z_r;
  ad::Var y;  ///< (H + 2) x 1
  Matrix attention;
};
LatentTrace latent_forward(ad::Tape& tape, const NetworkVars& vars, std::span<const double> segment);

/// Squared L2 reconstruction error.
ad::Var reconstruction_loss(const LatentTrace& trace);

ad::Var estimate_membership(const EstimatorVars& est, const ad::Var& y);

// ---------------------------------------------------------------------------
// Value-level API.

struct EncodeResult {
  Vector h_c;
  Matrix s_o;  ///< L x H, one row per step
};
EncodeResult encode(std::span<const double> segment, const EncoderParams& params);

struct DecodeResult {
  Vector reconstruction;
  Matrix attention;
};
DecodeResult decode_attentive(const Vector& h_c, const Matrix& s_o, const DecoderParams& params, int target_len);

Vector reconstruction_features(std::span<const double> s, std::span<const double> s_prime);

/// Latent representation of one segment: y = [h_c, z_r].
struct LatentRep {
  Vector h_c;
  Matrix s_o;
  Vector reconstruction;
  double euclidean_error = 0.0;
  double cosine_similarity = 0.0;
  Vector y;
};
LatentRep latent_representation(std::span<const double> segment, const EncoderParams& enc, const DecoderParams& dec);

Vector estimate_membership(const Vector& y, const EstimatorParams& params);

/// eta_t = eta0 / (1 + decay * t)
double learning_rate(double eta0, double decay, long step);

/// params -= learning_rate * grads. Throws NumericalError naming the first non-finite gradient block.
void sgd_step(NetworkParams& params, const NetworkParams& grads, double learning_rate);

void to_json(nlohmann::json& j, const NetworkParams& params);
void from_json(const nlohmann::json& j, NetworkParams& params);

}  // namespace seq2gmm
