#include "seq2gmm/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

#include "seq2gmm/errors.hpp"
#include "seq2gmm/random.hpp"

namespace seq2gmm {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Stream tags keep the random streams of the different training stages apart.
enum Stream : std::uint64_t { kInit = 1, kShuffle = 2, kKMeans = 3, kSelectM = 4, kHoldout = 5 };

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  return order;
}

double clip_gradients(NetworkParams& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, m] : parameter_blocks(grads)) sq += m->squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    for (auto& [name, m] : parameter_blocks(grads)) *m *= max_norm / norm;
  }
  return norm;
}

// Frozen-mixture energy of one latent node with weights taken from a 1 x K (or K x 1) node.
ad::Var frozen_energy(ad::Tape& tape, const GmmDensity& density, const ad::Var& y, const ad::Var& log_phi) {
  const int K = density.params().K();
  std::vector<ad::Var> logits;
  logits.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    ad::Var diff = y - tape.constant(density.params().mu[static_cast<std::size_t>(k)]);
    ad::Var white = matmul(tape.constant(density.chol_inverse(k)), diff);
    ad::Var quad = ad::dot(white, white);
    ad::Var logit = ad::add_scalar(ad::element(log_phi, k) - 0.5 * quad, density.log_norm(k));
    logits.push_back(logit);
  }
  return -ad::log_sum_exp(ad::concat_rows(logits));
}

void log_round(const RoundRecord& r) {
  nlohmann::json line = {{"t", r.round},
                         {"o_t", r.objective},
                         {"recon", r.reconstruction},
                         {"energy", r.energy},
                         {"seconds", r.seconds}};
  std::cerr << line.dump() << '\n';
}

}  // namespace

void validate_config(const TrainingConfig& c) {
  if (!(c.lambda >= 0.0) || !std::isfinite(c.lambda)) throw ConfigError("lambda must be a finite value >= 0");
  if (c.K < 0) throw ConfigError("K must be >= 1, or 0 for validation selection");
  if (c.K == 0) {
    if (c.k_candidates.empty()) throw ConfigError("K = 0 needs at least one candidate");
    for (int k : c.k_candidates) {
      if (k < 1) throw ConfigError("K candidates must be >= 1");
    }
    if (!(c.validation_fraction > 0.0 && c.validation_fraction < 1.0)) {
      throw ConfigError("validation fraction must lie in (0, 1)");
    }
  }
  if (c.hidden < 1) throw ConfigError("hidden size must be >= 1");
  if (c.estimator_width < 1) throw ConfigError("estimator width must be >= 1");
  if (c.rounds < 0) throw ConfigError("rounds must be >= 0");
  if (c.pretrain_epochs < 0) throw ConfigError("pretraining epochs must be >= 0");
  if (!(c.eta0 > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(c.decay >= 0.0)) throw ConfigError("learning-rate decay must be >= 0");
  if (c.batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(c.grad_clip >= 0.0) || !(c.pretrain_grad_clip >= 0.0)) throw ConfigError("gradient clips must be >= 0");
  if (c.num_segments < 0) throw ConfigError("segment count must be >= 1, or 0 for automatic selection");
  if (c.num_segments == 0 && c.max_segments < 2) throw ConfigError("automatic segment selection needs M_max >= 2");
  if (c.resample_len < 2) throw ConfigError("resample length must be >= 2");
  if (!(c.eps > 0.0)) throw ConfigError("covariance regularizer must be positive");
  if (c.em_max_iters < 0) throw ConfigError("EM iteration cap must be >= 0");
}

std::vector<Segment> segment_dataset(const Dataset& dataset, int M) {
  std::vector<Segment> out;
  for (const auto& series : dataset.series) {
    auto model = optimize_breakpoints(series.values, M);
    auto pieces = split_series(series, model);
    out.insert(out.end(), std::make_move_iterator(pieces.begin()), std::make_move_iterator(pieces.end()));
  }
  return out;
}

std::vector<Vector> compute_latents(std::span<const Segment> segments, const NetworkParams& params) {
  std::vector<Vector> ys;
  ys.reserve(segments.size());
  for (const auto& segment : segments) {
    ys.push_back(latent_representation(segment.values, params.encoder, params.decoder).y);
  }
  return ys;
}

double reconstruction_objective(std::span<const Segment> batch, const NetworkParams& params, NetworkParams* grads,
                                double grad_scale) {
  double total = 0.0;
  for (const auto& segment : batch) {
    if (!grads) {
      Eigen::Map<const Vector> s(segment.values.data(), static_cast<Eigen::Index>(segment.values.size()));
      total += (s - latent_representation(segment.values, params.encoder, params.decoder).reconstruction).squaredNorm();
      continue;
    }
    ad::Tape tape;
    auto vars = bind(tape, params, grads);
    auto trace = latent_forward(tape, vars, segment.values);
    ad::Var loss = reconstruction_loss(trace);
    total += loss.scalar();
    tape.backward(grad_scale * loss);
  }
  return total;
}

JointLoss joint_loss(std::span<const Segment> batch, const NetworkParams& params, const GmmParams& frozen,
                     double lambda, NetworkParams* grads, double grad_scale) {
  if (batch.empty()) throw ArgumentError("joint loss of an empty batch");
  if (frozen.K() != params.estimator.components()) {
    throw ArgumentError("mixture and estimator disagree on the number of components");
  }
  if (frozen.dim() != params.hidden() + 2) throw ArgumentError("mixture dimension differs from the latent size");
  GmmDensity density(frozen);

  ad::Tape tape;
  auto vars = bind(tape, params, grads);
  std::vector<ad::Var> ys, recon;
  std::vector<ad::Var> memberships;
  for (const auto& segment : batch) {
    auto trace = latent_forward(tape, vars, segment.values);
    recon.push_back(reconstruction_loss(trace));
    memberships.push_back(estimate_membership(vars.estimator, trace.y));
    ys.push_back(trace.y);
  }
  const double n = static_cast<double>(batch.size());
  ad::Var gamma = ad::concat_cols(memberships);  // K x N
  ad::Var phi = matmul(gamma, tape.constant(Matrix::Constant(gamma.cols(), 1, 1.0 / n)));
  ad::Var log_phi = ad::log(phi);

  std::vector<ad::Var> energies;
  energies.reserve(batch.size());
  for (const auto& y : ys) energies.push_back(frozen_energy(tape, density, y, log_phi));

  ad::Var recon_total = ad::sum(ad::concat_rows(recon));
  ad::Var energy_total = ad::sum(ad::concat_rows(energies));
  ad::Var total = recon_total + lambda * energy_total;
  if (grads) tape.backward(grad_scale * total);
  return {total.scalar(), recon_total.scalar(), energy_total.scalar()};
}

NetworkParams pretrain_autoencoder(std::span<const Segment> segments, const TrainingConfig& config,
                                   std::vector<double>* epoch_losses) {
  validate_config(config);
  if (segments.empty()) throw ArgumentError("no segments to pretrain on");
  const int K = std::max(config.K, 1);
  NetworkParams params = init_network(config.hidden, config.estimator_width, K, derive_seed(config.seed, kInit));
  if (epoch_losses) epoch_losses->clear();

  long step = 0;
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
    auto order = shuffled_order(segments.size(), derive_seed(derive_seed(config.seed, kShuffle), epoch));
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      const std::size_t end = std::min(order.size(), begin + batch);
      std::vector<Segment> mb;
      for (std::size_t i = begin; i < end; ++i) mb.push_back(segments[order[i]]);
      NetworkParams grads = zeros_like(params);
      epoch_loss += reconstruction_objective(mb, params, &grads, 1.0 / static_cast<double>(mb.size()));
      clip_gradients(grads, config.pretrain_grad_clip);
      sgd_step(params, grads, learning_rate(config.eta0, config.decay, step++));
    }
    if (epoch_losses) epoch_losses->push_back(epoch_loss / static_cast<double>(segments.size()));
  }
  return params;
}

JointLoss full_objective(std::span<const Segment> segments, const TrainedModel& model) {
  if (segments.empty()) throw ArgumentError("objective of an empty segment set");
  GmmDensity density(model.gmm);
  JointLoss out;
  std::vector<Vector> ys;
  Vector phi = Vector::Zero(model.gmm.K());
  for (const auto& segment : segments) {
    auto rep = latent_representation(segment.values, model.networks.encoder, model.networks.decoder);
    Eigen::Map<const Vector> s(segment.values.data(), static_cast<Eigen::Index>(segment.values.size()));
    out.reconstruction += (s - rep.reconstruction).squaredNorm();
    phi += estimate_membership(rep.y, model.networks.estimator);
    ys.push_back(std::move(rep.y));
  }
  phi /= static_cast<double>(segments.size());
  for (const auto& y : ys) {
    Vector logits(model.gmm.K());
    for (int k = 0; k < model.gmm.K(); ++k) {
      Vector white = density.chol_inverse(k) * (y - model.gmm.mu[static_cast<std::size_t>(k)]);
      logits(k) = std::log(phi(k)) - 0.5 * white.squaredNorm() + density.log_norm(k);
    }
    out.energy -= log_sum_exp(logits);
  }
  out.total = out.reconstruction + model.lambda * out.energy;
  return out;
}

TrainingResult surrogate_train(const Dataset& train, const TrainingConfig& config) {
  validate_config(config);
  validate_dataset(train);
  if (config.K < 1) throw ConfigError("surrogate training needs a fixed K >= 1");
  const auto started = Clock::now();

  TrainingResult result;
  TrainedModel& model = result.model;
  TrainingTrace& trace = result.trace;
  model.normal_class = train.normal_class;
  model.lambda = config.lambda;

  int M = config.num_segments;
  if (M == 0) {
    M = select_num_segments(train, config.max_segments, config.resample_len, derive_seed(config.seed, kSelectM),
                            &trace.m_selection_scores);
  }
  model.num_segments = M;
  const auto segments = segment_dataset(train, M);
  if (segments.size() < static_cast<std::size_t>(config.K)) {
    throw ArgumentError("fewer training segments than mixture components");
  }

  model.networks = pretrain_autoencoder(segments, config, &trace.pretrain_losses);
  model.pretrain_objective = reconstruction_objective(segments, model.networks);

  // The learning-rate schedule continues from where pretraining left it.
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  long step = static_cast<long>(config.pretrain_epochs) * static_cast<long>((segments.size() + batch - 1) / batch);
  bool have_gmm = false;
  auto refit = [&](RoundRecord* record) {
    auto ys = compute_latents(segments, model.networks);
    EmResult em = have_gmm ? em_refine(ys, model.gmm, config.em_max_iters, config.em_tol)
                           : fit_gmm(ys, config.K, config.eps, derive_seed(config.seed, kKMeans),
                                     config.em_max_iters, config.em_tol);
    model.gmm = std::move(em.params);
    have_gmm = true;
    if (record) {
      record->em_energy_before = em.mean_energy_trace.front();
      record->em_energy_after = em.mean_energy_trace.back();
    }
  };
  auto evaluate = [&](RoundRecord& record) {
    auto loss = full_objective(segments, model);
    record.objective = loss.total;
    record.reconstruction = loss.reconstruction;
    record.energy = loss.energy;
    record.bound_lower = model.pretrain_objective;
    record.bound_upper = loss.total;
    record.seconds = seconds_since(started);
    if (config.log_progress) log_round(record);
  };

  for (int t = 1; t <= config.rounds; ++t) {
    RoundRecord record;
    record.round = t;
    refit(&record);
    auto order = shuffled_order(segments.size(), derive_seed(derive_seed(config.seed, kShuffle), 100000 + t));
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      const std::size_t end = std::min(order.size(), begin + batch);
      std::vector<Segment> mb;
      for (std::size_t i = begin; i < end; ++i) mb.push_back(segments[order[i]]);
      NetworkParams grads = zeros_like(model.networks);
      joint_loss(mb, model.networks, model.gmm, config.lambda, &grads, 1.0 / static_cast<double>(mb.size()));
      clip_gradients(grads, config.grad_clip);
      sgd_step(model.networks, grads, learning_rate(config.eta0, config.decay, step++));
    }
    evaluate(record);
    trace.rounds.push_back(record);
  }

  // Final mixture for scoring: an EM pass on the latents of the trained networks, keeping the
  // better of the warm start and a fresh k-means initialization.
  RoundRecord final_record;
  final_record.round = std::max(config.rounds, 1);
  refit(&final_record);
  if (config.rounds > 0) {
    EmResult fresh = fit_gmm(compute_latents(segments, model.networks), config.K, config.eps,
                             derive_seed(config.seed, kKMeans), config.em_max_iters, config.em_tol);
    if (fresh.mean_energy_trace.back() < final_record.em_energy_after) model.gmm = std::move(fresh.params);
  }
  if (config.rounds == 0) {
    evaluate(final_record);
    trace.rounds.push_back(final_record);
  }

  GmmDensity density(model.gmm);
  for (const auto& y : compute_latents(segments, model.networks)) model.train_energies.push_back(density.energy(y));
  std::sort(model.train_energies.begin(), model.train_energies.end());
  return result;
}

TrainingResult train_model(const Dataset& train, const TrainingConfig& config) {
  validate_config(config);
  if (config.K != 0) return surrogate_train(train, config);

  TrainingConfig fixed = config;
  std::vector<double> m_scores;
  if (fixed.num_segments == 0) {
    fixed.num_segments = select_num_segments(train, config.max_segments, config.resample_len,
                                             derive_seed(config.seed, kSelectM), &m_scores);
  }

  // Hold out a fraction of the series (normals only) to compare candidate K by mean energy.
  std::vector<std::size_t> normals;
  for (std::size_t i = 0; i < train.series.size(); ++i) {
    if (train.series[i].label != Label::Anomaly) normals.push_back(i);
  }
  auto order = shuffled_order(normals.size(), derive_seed(config.seed, kHoldout));
  const std::size_t held = static_cast<std::size_t>(std::floor(config.validation_fraction * normals.size() + 0.5));
  if (held < 1 || held >= train.series.size()) throw ArgumentError("training set too small for a validation split");
  std::vector<bool> is_held(train.series.size(), false);
  for (std::size_t i = 0; i < held; ++i) is_held[normals[order[i]]] = true;
  Dataset fit_part{train.name, {}, train.normal_class};
  Dataset val_part{train.name, {}, train.normal_class};
  for (std::size_t i = 0; i < train.series.size(); ++i) {
    (is_held[i] ? val_part : fit_part).series.push_back(train.series[i]);
  }
  const auto val_segments = segment_dataset(val_part, fixed.num_segments);

  std::vector<std::pair<int, double>> scores;
  int best_k = config.k_candidates.front();
  double best = std::numeric_limits<double>::infinity();
  for (int k : config.k_candidates) {
    TrainingConfig candidate = fixed;
    candidate.K = k;
    candidate.log_progress = false;
    auto fitted = surrogate_train(fit_part, candidate);
    const double energy = mean_energy(compute_latents(val_segments, fitted.model.networks), fitted.model.gmm);
    scores.emplace_back(k, energy);
    if (energy < best) {
      best = energy;
      best_k = k;
    }
  }
  fixed.K = best_k;
  auto result = surrogate_train(train, fixed);
  result.trace.k_selection = std::move(scores);
  result.trace.m_selection_scores = std::move(m_scores);
  return result;
}

ObjectiveBounds objective_bounds(const Dataset& train, const TrainedModel& model) {
  auto segments = segment_dataset(train, model.num_segments);
  return {model.pretrain_objective, full_objective(segments, model).total};
}

void to_json(nlohmann::json& j, const TrainingConfig& c) {
  j = {{"lambda", c.lambda},
       {"K", c.K},
       {"k_candidates", c.k_candidates},
       {"validation_fraction", c.validation_fraction},
       {"hidden", c.hidden},
       {"estimator_width", c.estimator_width},
       {"rounds", c.rounds},
       {"pretrain_epochs", c.pretrain_epochs},
       {"eta0", c.eta0},
       {"decay", c.decay},
       {"batch_size", c.batch_size},
       {"grad_clip", c.grad_clip},
       {"pretrain_grad_clip", c.pretrain_grad_clip},
       {"seed", c.seed},
       {"num_segments", c.num_segments},
       {"max_segments", c.max_segments},
       {"resample_len", c.resample_len},
       {"eps", c.eps},
       {"em_max_iters", c.em_max_iters},
       {"em_tol", c.em_tol}};
}

void from_json(const nlohmann::json& j, TrainingConfig& c) {
  TrainingConfig d;
  c.lambda = j.value("lambda", d.lambda);
  c.K = j.value("K", d.K);
  c.k_candidates = j.value("k_candidates", d.k_candidates);
  c.validation_fraction = j.value("validation_fraction", d.validation_fraction);
  c.hidden = j.value("hidden", d.hidden);
  c.estimator_width = j.value("estimator_width", d.estimator_width);
  c.rounds = j.value("rounds", d.rounds);
  c.pretrain_epochs = j.value("pretrain_epochs", d.pretrain_epochs);
  c.eta0 = j.value("eta0", d.eta0);
  c.decay = j.value("decay", d.decay);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.grad_clip = j.value("grad_clip", d.grad_clip);
  c.pretrain_grad_clip = j.value("pretrain_grad_clip", d.pretrain_grad_clip);
  c.seed = j.value("seed", d.seed);
  c.num_segments = j.value("num_segments", d.num_segments);
  c.max_segments = j.value("max_segments", d.max_segments);
  c.resample_len = j.value("resample_len", d.resample_len);
  c.eps = j.value("eps", d.eps);
  c.em_max_iters = j.value("em_max_iters", d.em_max_iters);
  c.em_tol = j.value("em_tol", d.em_tol);
}

void to_json(nlohmann::json& j, const TrainingTrace& trace) {
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& r : trace.rounds) {
    rounds.push_back({{"t", r.round},
                      {"o_t", r.objective},
                      {"recon", r.reconstruction},
                      {"energy", r.energy},
                      {"o1", r.bound_lower},
                      {"o3", r.bound_upper},
                      {"em_energy_before", r.em_energy_before},
                      {"em_energy_after", r.em_energy_after},
                      {"seconds", r.seconds}});
  }
  nlohmann::json k_sel = nlohmann::json::array();
  for (const auto& [k, e] : trace.k_selection) k_sel.push_back({{"K", k}, {"validation_energy", e}});
  j = {{"pretrain_losses", trace.pretrain_losses},
       {"rounds", rounds},
       {"m_selection_scores", trace.m_selection_scores},
       {"k_selection", k_sel}};
}

}  // namespace seq2gmm
