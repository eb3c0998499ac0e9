#include "seq2gmm/networks.hpp"

#include <cmath>

#include "seq2gmm/errors.hpp"
#include "seq2gmm/matrix_json.hpp"
#include "seq2gmm/random.hpp"

namespace seq2gmm {

namespace {

template <typename Params, typename MatrixPtr>
std::vector<std::pair<std::string, MatrixPtr>> blocks_of(Params& p) {
  return {
      {"encoder.gru.w_x", &p.encoder.gru.w_x},   {"encoder.gru.w_h", &p.encoder.gru.w_h},
      {"encoder.gru.b_x", &p.encoder.gru.b_x},   {"encoder.gru.b_h", &p.encoder.gru.b_h},
      {"decoder.gru.w_x", &p.decoder.gru.w_x},   {"decoder.gru.w_h", &p.decoder.gru.w_h},
      {"decoder.gru.b_x", &p.decoder.gru.b_x},   {"decoder.gru.b_h", &p.decoder.gru.b_h},
      {"decoder.att_dec", &p.decoder.att_dec},   {"decoder.att_enc", &p.decoder.att_enc},
      {"decoder.att_v", &p.decoder.att_v},       {"decoder.out_w", &p.decoder.out_w},
      {"decoder.out_b", &p.decoder.out_b},       {"estimator.w1", &p.estimator.w1},
      {"estimator.b1", &p.estimator.b1},         {"estimator.w2", &p.estimator.w2},
      {"estimator.b2", &p.estimator.b2},
  };
}

bool is_bias(const std::string& name) {
  auto dot = name.rfind('.');
  std::string leaf = name.substr(dot + 1);
  return leaf.front() == 'b' || leaf == "out_b";
}

GruParams gru_shape(int input, int hidden) {
  GruParams g;
  g.w_x = Matrix::Zero(3 * hidden, input);
  g.w_h = Matrix::Zero(3 * hidden, hidden);
  g.b_x = Matrix::Zero(3 * hidden, 1);
  g.b_h = Matrix::Zero(3 * hidden, 1);
  return g;
}

GruVars bind_gru(ad::Tape& tape, const GruParams& p, GruParams* g) {
  return {tape.parameter(p.w_x, g ? &g->w_x : nullptr), tape.parameter(p.w_h, g ? &g->w_h : nullptr),
          tape.parameter(p.b_x, g ? &g->b_x : nullptr), tape.parameter(p.b_h, g ? &g->b_h : nullptr)};
}

ad::Var column(ad::Tape& tape, std::span<const double> values) {
  Matrix m(static_cast<Eigen::Index>(values.size()), 1);
  for (std::size_t i = 0; i < values.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = values[i];
  return tape.constant(std::move(m));
}

}  // namespace

std::vector<std::pair<std::string, Matrix*>> parameter_blocks(NetworkParams& params) {
  return blocks_of<NetworkParams, Matrix*>(params);
}

std::vector<std::pair<std::string, const Matrix*>> parameter_blocks(const NetworkParams& params) {
  return blocks_of<const NetworkParams, const Matrix*>(params);
}

NetworkParams zeros_like(const NetworkParams& params) {
  NetworkParams out = params;
  for (auto& [name, m] : parameter_blocks(out)) m->setZero();
  return out;
}

NetworkParams init_network(int hidden, int estimator_width, int components, std::uint64_t seed) {
  if (hidden < 1 || estimator_width < 1 || components < 1) throw ArgumentError("network sizes must be positive");
  NetworkParams p;
  p.encoder.gru = gru_shape(1, hidden);
  p.decoder.gru = gru_shape(hidden + 1, hidden);
  p.decoder.att_dec = Matrix::Zero(hidden, hidden);
  p.decoder.att_enc = Matrix::Zero(hidden, hidden);
  p.decoder.att_v = Matrix::Zero(1, hidden);
  p.decoder.out_w = Matrix::Zero(1, hidden);
  p.decoder.out_b = Matrix::Zero(1, 1);
  p.estimator.w1 = Matrix::Zero(estimator_width, hidden + 2);
  p.estimator.b1 = Matrix::Zero(estimator_width, 1);
  p.estimator.w2 = Matrix::Zero(components, estimator_width);
  p.estimator.b2 = Matrix::Zero(components, 1);

  Rng rng(seed);
  for (auto& [name, m] : parameter_blocks(p)) {
    if (is_bias(name)) continue;
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = -0.08 + 0.16 * uniform01(rng);
  }
  return p;
}

bool all_finite(const NetworkParams& params) {
  for (const auto& [name, m] : parameter_blocks(params)) {
    if (!m->allFinite()) return false;
  }
  return true;
}

NetworkVars bind(ad::Tape& tape, const NetworkParams& params, NetworkParams* grads) {
  NetworkVars v;
  v.encoder.gru = bind_gru(tape, params.encoder.gru, grads ? &grads->encoder.gru : nullptr);
  v.decoder.gru = bind_gru(tape, params.decoder.gru, grads ? &grads->decoder.gru : nullptr);
  auto* gd = grads ? &grads->decoder : nullptr;
  v.decoder.att_dec = tape.parameter(params.decoder.att_dec, gd ? &gd->att_dec : nullptr);
  v.decoder.att_enc = tape.parameter(params.decoder.att_enc, gd ? &gd->att_enc : nullptr);
  v.decoder.att_v = tape.parameter(params.decoder.att_v, gd ? &gd->att_v : nullptr);
  v.decoder.out_w = tape.parameter(params.decoder.out_w, gd ? &gd->out_w : nullptr);
  v.decoder.out_b = tape.parameter(params.decoder.out_b, gd ? &gd->out_b : nullptr);
  auto* ge = grads ? &grads->estimator : nullptr;
  v.estimator.w1 = tape.parameter(params.estimator.w1, ge ? &ge->w1 : nullptr);
  v.estimator.b1 = tape.parameter(params.estimator.b1, ge ? &ge->b1 : nullptr);
  v.estimator.w2 = tape.parameter(params.estimator.w2, ge ? &ge->w2 : nullptr);
  v.estimator.b2 = tape.parameter(params.estimator.b2, ge ? &ge->b2 : nullptr);
  return v;
}

ad::Var gru_step(const GruVars& gru, const ad::Var& x, const ad::Var& h) {
  ad::Tape* tape = h.tape();
  const Eigen::Index H = h.rows();
  if (x.cols() != 1 || h.cols() != 1 || gru.w_x.cols() != x.rows() || gru.w_h.rows() != 3 * H) {
    throw ArgumentError("gru_step: shape mismatch");
  }
  const Vector gx = gru.w_x.value() * x.value() + gru.b_x.value();
  const Vector gh = gru.w_h.value() * h.value() + gru.b_h.value();
  const Vector hv = h.value();
  Vector r = (1.0 / (1.0 + (-(gx.head(H) + gh.head(H))).array().exp())).matrix();
  Vector z = (1.0 / (1.0 + (-(gx.segment(H, H) + gh.segment(H, H))).array().exp())).matrix();
  Vector n = (gx.tail(H) + r.cwiseProduct(gh.tail(H))).array().tanh().matrix();
  Matrix out = (1.0 - z.array()).matrix().cwiseProduct(n) + z.cwiseProduct(hv);
  const bool grad = x.requires_grad() || h.requires_grad() || gru.w_x.requires_grad() || gru.w_h.requires_grad() ||
                    gru.b_x.requires_grad() || gru.b_h.requires_grad();
  const int ix = x.id(), ih = h.id(), iwx = gru.w_x.id(), iwh = gru.w_h.id(), ibx = gru.b_x.id(), ibh = gru.b_h.id();
  Vector gh_n = gh.tail(H);
  return tape->push(std::move(out), grad,
                    [=, r = std::move(r), z = std::move(z), n = std::move(n), gh_n = std::move(gh_n)](
                        ad::Tape& t, const Matrix& g) {
                      const Vector& hp = t.value(ih).col(0);
                      const Vector da_n =
                          (g.col(0).array() * (1.0 - z.array()) * (1.0 - n.array().square())).matrix();
                      const Vector dz = g.col(0).cwiseProduct(hp - n);
                      const Vector dr = da_n.cwiseProduct(gh_n);
                      Vector dgx(3 * H), dgh(3 * H);
                      dgx.head(H) = (dr.array() * r.array() * (1.0 - r.array())).matrix();
                      dgx.segment(H, H) = (dz.array() * z.array() * (1.0 - z.array())).matrix();
                      dgx.tail(H) = da_n;
                      dgh.head(2 * H) = dgx.head(2 * H);
                      dgh.tail(H) = da_n.cwiseProduct(r);
                      if (t.requires_grad(iwx)) t.accumulate(iwx, dgx * t.value(ix).transpose());
                      if (t.requires_grad(ibx)) t.accumulate(ibx, dgx);
                      if (t.requires_grad(iwh)) t.accumulate(iwh, dgh * hp.transpose());
                      if (t.requires_grad(ibh)) t.accumulate(ibh, dgh);
                      if (t.requires_grad(ix)) t.accumulate(ix, t.value(iwx).transpose() * dgx);
                      if (t.requires_grad(ih)) {
                        t.accumulate(ih, t.value(iwh).transpose() * dgh + g.col(0).cwiseProduct(z));
                      }
                    });
}

EncoderTrace encode(ad::Tape& tape, const EncoderVars& enc, std::span<const double> segment) {
  if (segment.empty()) throw ArgumentError("cannot encode an empty segment");
  for (double v : segment) {
    if (!std::isfinite(v)) throw NumericalError("segment contains a non-finite sample");
  }
  const Eigen::Index H = enc.gru.w_h.cols();
  ad::Var h = tape.constant(Matrix::Zero(H, 1));
  std::vector<ad::Var> states;
  states.reserve(segment.size());
  for (double v : segment) {
    h = gru_step(enc.gru, tape.constant(Matrix::Constant(1, 1, v)), h);
    states.push_back(h);
  }
  return {h, ad::concat_cols(states)};
}

DecoderTrace decode_attentive(ad::Tape& tape, const DecoderVars& dec, const ad::Var& h_c, const ad::Var& s_o,
                              int target_len) {
  if (target_len < 1) throw ArgumentError("decoder target length must be positive");
  if (s_o.cols() < 1) throw ArgumentError("attention memory is empty");
  const Eigen::Index L = s_o.cols();

  DecoderTrace trace;
  trace.attention.resize(target_len, L);
  ad::Var keys = matmul(dec.att_enc, s_o);  // H x L, shared by every step
  ad::Var h = h_c;
  ad::Var previous = tape.constant(Matrix::Zero(1, 1));
  std::vector<ad::Var> outputs;
  outputs.reserve(static_cast<std::size_t>(target_len));
  for (int t = 0; t < target_len; ++t) {
    ad::Var scores = matmul(dec.att_v, ad::tanh(add_column(keys, matmul(dec.att_dec, h))));  // 1 x L
    ad::Var alpha = ad::softmax(scores);
    trace.attention.row(t) = alpha.value();
    ad::Var context = matmul(s_o, transpose(alpha));  // H x 1
    std::vector<ad::Var> input_parts{previous, context};
    h = gru_step(dec.gru, ad::concat_rows(input_parts), h);
    previous = matmul(dec.out_w, h) + dec.out_b;
    outputs.push_back(previous);
  }
  trace.output = ad::concat_rows(outputs);
  return trace;
}

ad::Var reconstruction_features(ad::Tape& tape, const ad::Var& s, const ad::Var& s_prime) {
  if (s.rows() != s_prime.rows() || s.cols() != 1 || s_prime.cols() != 1) {
    throw ArgumentError("reconstruction features need equal-length column vectors");
  }
  const double length = static_cast<double>(s.rows());
  ad::Var euclid = (1.0 / std::sqrt(length)) * ad::sqrt(ad::sum(ad::square(s - s_prime)));
  ad::Var cosine;
  const double ns = s.value().norm();
  const double np = s_prime.value().norm();
  if (ns == 0.0 || np == 0.0) {
    cosine = tape.constant(Matrix::Zero(1, 1));
  } else {
    ad::Var norms = ad::sqrt(ad::dot(s, s));
    norms = scale_by(norms, ad::sqrt(ad::dot(s_prime, s_prime)));
    cosine = divide_by(ad::dot(s, s_prime), norms);
  }
  std::vector<ad::Var> parts{euclid, cosine};
  return ad::concat_rows(parts);
}

LatentTrace latent_forward(ad::Tape& tape, const NetworkVars& vars, std::span<const double> segment) {
  LatentTrace trace;
  trace.input = column(tape, segment);
  auto enc = encode(tape, vars.encoder, segment);
  auto dec = decode_attentive(tape, vars.decoder, enc.h_c, enc.s_o, static_cast<int>(segment.size()));
  trace.h_c = enc.h_c;
  trace.reconstruction = dec.output;
  trace.attention = std::move(dec.attention);
  trace.z_r = reconstruction_features(tape, trace.input, trace.reconstruction);
  std::vector<ad::Var> parts{trace.h_c, trace.z_r};
  trace.y = ad::concat_rows(parts);
  return trace;
}

ad::Var reconstruction_loss(const LatentTrace& trace) { return ad::sum(ad::square(trace.input - trace.reconstruction)); }

ad::Var estimate_membership(const EstimatorVars& est, const ad::Var& y) {
  if (y.rows() != est.w1.cols()) throw ArgumentError("estimator input dimension mismatch");
  ad::Var hidden = ad::tanh(matmul(est.w1, y) + est.b1);
  return ad::softmax(matmul(est.w2, hidden) + est.b2);
}

namespace {

Vector sigmoid(const Vector& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }

Vector gru_step(const GruParams& p, const Vector& x, const Vector& h) {
  const Eigen::Index H = h.size();
  const Vector gx = p.w_x * x + p.b_x;
  const Vector gh = p.w_h * h + p.b_h;
  const Vector r = sigmoid(gx.head(H) + gh.head(H));
  const Vector z = sigmoid(gx.segment(H, H) + gh.segment(H, H));
  const Vector n = (gx.tail(H) + r.cwiseProduct(gh.tail(H))).array().tanh().matrix();
  return (1.0 - z.array()).matrix().cwiseProduct(n) + z.cwiseProduct(h);
}

void check_segment(std::span<const double> segment) {
  if (segment.empty()) throw ArgumentError("cannot encode an empty segment");
  for (double v : segment) {
    if (!std::isfinite(v)) throw NumericalError("segment contains a non-finite sample");
  }
}

}  // namespace

EncodeResult encode(std::span<const double> segment, const EncoderParams& params) {
  check_segment(segment);
  const int H = params.hidden();
  EncodeResult out;
  out.s_o.resize(static_cast<Eigen::Index>(segment.size()), H);
  Vector h = Vector::Zero(H);
  Vector x(1);
  for (std::size_t t = 0; t < segment.size(); ++t) {
    x(0) = segment[t];
    h = gru_step(params.gru, x, h);
    out.s_o.row(static_cast<Eigen::Index>(t)) = h.transpose();
  }
  out.h_c = h;
  return out;
}

DecodeResult decode_attentive(const Vector& h_c, const Matrix& s_o, const DecoderParams& params, int target_len) {
  if (target_len < 1) throw ArgumentError("decoder target length must be positive");
  if (s_o.rows() < 1) throw ArgumentError("attention memory is empty");
  if (s_o.cols() != h_c.size()) throw ArgumentError("attention memory width differs from the hidden size");
  const Eigen::Index H = h_c.size();
  const Eigen::Index L = s_o.rows();
  DecodeResult out;
  out.reconstruction.resize(target_len);
  out.attention.resize(target_len, L);
  const Matrix keys = params.att_enc * s_o.transpose();  // H x L
  Vector h = h_c;
  Vector input(H + 1);
  double previous = 0.0;
  for (int t = 0; t < target_len; ++t) {
    Matrix hidden = keys.colwise() + params.att_dec * h;
    Eigen::RowVectorXd scores = params.att_v * hidden.array().tanh().matrix();
    Eigen::RowVectorXd alpha = (scores.array() - scores.maxCoeff()).exp().matrix();
    alpha /= alpha.sum();
    out.attention.row(t) = alpha;
    input(0) = previous;
    input.tail(H) = s_o.transpose() * alpha.transpose();
    h = gru_step(params.gru, input, h);
    previous = (params.out_w * h)(0, 0) + params.out_b(0, 0);
    out.reconstruction(t) = previous;
  }
  return out;
}

Vector reconstruction_features(std::span<const double> s, std::span<const double> s_prime) {
  if (s.size() != s_prime.size()) throw ArgumentError("reconstruction features need equal lengths");
  if (s.empty()) throw ArgumentError("reconstruction features of empty sequences");
  const Eigen::Map<const Vector> a(s.data(), static_cast<Eigen::Index>(s.size()));
  const Eigen::Map<const Vector> b(s_prime.data(), static_cast<Eigen::Index>(s_prime.size()));
  Vector z(2);
  z(0) = (a - b).norm() / std::sqrt(static_cast<double>(s.size()));
  const double norms = a.norm() * b.norm();
  z(1) = norms == 0.0 ? 0.0 : a.dot(b) / norms;
  return z;
}

LatentRep latent_representation(std::span<const double> segment, const EncoderParams& enc,
                                const DecoderParams& dec) {
  auto encoded = encode(segment, enc);
  auto decoded = decode_attentive(encoded.h_c, encoded.s_o, dec, static_cast<int>(segment.size()));
  const Vector z = reconstruction_features(
      segment, std::span<const double>(decoded.reconstruction.data(), segment.size()));
  LatentRep rep;
  rep.h_c = encoded.h_c;
  rep.s_o = std::move(encoded.s_o);
  rep.reconstruction = std::move(decoded.reconstruction);
  rep.euclidean_error = z(0);
  rep.cosine_similarity = z(1);
  rep.y.resize(rep.h_c.size() + 2);
  rep.y << rep.h_c, z;
  return rep;
}

Vector estimate_membership(const Vector& y, const EstimatorParams& params) {
  if (y.size() != params.w1.cols()) throw ArgumentError("estimator input dimension mismatch");
  const Vector logits = params.w2 * (params.w1 * y + params.b1).array().tanh().matrix() + params.b2;
  Vector p = (logits.array() - logits.maxCoeff()).exp().matrix();
  return p / p.sum();
}

double learning_rate(double eta0, double decay, long step) {
  return eta0 / (1.0 + decay * static_cast<double>(step));
}

void sgd_step(NetworkParams& params, const NetworkParams& grads, double rate) {
  auto targets = parameter_blocks(params);
  auto sources = parameter_blocks(grads);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const Matrix& g = *sources[i].second;
    if (g.size() == 0) continue;
    if (g.rows() != targets[i].second->rows() || g.cols() != targets[i].second->cols()) {
      throw ArgumentError("gradient shape mismatch for " + targets[i].first);
    }
    if (!g.allFinite()) throw NumericalError("non-finite gradient in " + targets[i].first);
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const Matrix& g = *sources[i].second;
    if (g.size() != 0) *targets[i].second -= rate * g;
  }
}

void to_json(nlohmann::json& j, const NetworkParams& params) {
  j = nlohmann::json::object();
  for (const auto& [name, m] : parameter_blocks(params)) j[name] = matrix_to_json(*m);
}

void from_json(const nlohmann::json& j, NetworkParams& params) {
  for (auto& [name, m] : parameter_blocks(params)) {
    if (!j.contains(name)) throw ArgumentError("model file lacks parameter block " + name);
    *m = matrix_from_json(j.at(name));
  }
  const int H = params.encoder.gru.hidden();
  if (params.encoder.gru.w_x.rows() != 3 * H || params.decoder.gru.w_x.cols() != H + 1 ||
      params.estimator.w1.cols() != H + 2) {
    throw ArgumentError("parameter shapes in the model file are inconsistent");
  }
}

}  // namespace seq2gmm
