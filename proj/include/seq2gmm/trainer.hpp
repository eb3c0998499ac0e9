#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "seq2gmm/dataio.hpp"
#include "seq2gmm/mixture.hpp"
#include "seq2gmm/networks.hpp"
#include "seq2gmm/segmentation.hpp"

namespace seq2gmm {

struct TrainingConfig {
  double lambda = 0.1;  ///< weight of the energy term
  int K = 0;            ///< mixture components; 0 picks one of k_candidates on a validation split
  std::vector<int> k_candidates{2, 5, 10};
  double validation_fraction = 0.2;
  int hidden = 8;
  int estimator_width = 10;
  int rounds = 20;  ///< surrogate rounds T
  int pretrain_epochs = 50;
  double eta0 = 0.01;
  double decay = 0.01;
  int batch_size = 32;
  double grad_clip = 0.5;           ///< global gradient-norm cap per joint-training step, 0 disables
  double pretrain_grad_clip = 0.0;  ///< same for pretraining
  std::uint64_t seed = 1;
  int num_segments = 0;  ///< shared M; 0 selects it with the Calinski-Harabasz rule
  int max_segments = 6;
  int resample_len = 16;
  double eps = 1e-6;
  int em_max_iters = 200;
  double em_tol = 1e-6;
  bool log_progress = false;  ///< one JSON line per round on stderr
};

void validate_config(const TrainingConfig& config);

struct RoundRecord {
  int round = 0;
  double objective = 0.0;       ///< o_t, full training set
  double reconstruction = 0.0;  ///< sum of squared reconstruction errors
  double energy = 0.0;          ///< sum of sample energies under the frozen mixture
  double bound_lower = 0.0;     ///< o1: reconstruction objective right after pretraining
  double bound_upper = 0.0;     ///< o3: full objective at the current parameters
  double em_energy_before = 0.0;
  double em_energy_after = 0.0;
  double seconds = 0.0;
};

struct TrainingTrace {
  std::vector<double> pretrain_losses;  ///< mean per-segment loss after every pretraining epoch
  std::vector<RoundRecord> rounds;
  std::vector<double> m_selection_scores;  ///< CH(2), CH(3), ... when M was selected automatically
  std::vector<std::pair<int, double>> k_selection;  ///< (K, mean validation energy)
};

struct TrainedModel {
  int num_segments = 1;
  int normal_class = 1;
  bool normalize = true;
  NetworkParams networks;
  GmmParams gmm;  ///< frozen mixture used for scoring
  std::vector<double> train_energies;  ///< every training segment's energy, ascending
  double pretrain_objective = 0.0;     ///< o1
  double lambda = 0.1;
  std::string aggregation = "max";
  double shapelet_quantile = 0.95;
};

/// Segments every series with its own breakpoints and the shared count M.
std::vector<Segment> segment_dataset(const Dataset& dataset, int M);

/// Latent vectors y for a list of segments.
std::vector<Vector> compute_latents(std::span<const Segment> segments, const NetworkParams& params);

struct JointLoss {
  double total = 0.0;
  double reconstruction = 0.0;
  double energy = 0.0;
};

/// sum D[s, s'] + lambda * sum E'(y) over the batch. E' uses the frozen means and covariances
/// with weights Phi_k = mean of the estimator's memberships over the batch.
/// If `grads` is non-null, adjoints of `total * grad_scale` are added into it.
JointLoss joint_loss(std::span<const Segment> batch, const NetworkParams& params, const GmmParams& frozen,
                     double lambda, NetworkParams* grads = nullptr, double grad_scale = 1.0);

/// Sum of squared reconstruction errors; with `grads`, accumulates adjoints of `loss * grad_scale`.
double reconstruction_objective(std::span<const Segment> batch, const NetworkParams& params,
                                NetworkParams* grads = nullptr, double grad_scale = 1.0);

/// Mini-batch SGD on the reconstruction loss only. Returns freshly initialized networks
/// (seeded from config.seed) with a trained encoder and decoder.
NetworkParams pretrain_autoencoder(std::span<const Segment> segments, const TrainingConfig& config,
                                   std::vector<double>* epoch_losses = nullptr);

struct TrainingResult {
  TrainedModel model;
  TrainingTrace trace;
};

/// Alternating optimization: pretrain, then per round an EM fit of the mixture on the current
/// latents and one SGD epoch on the frozen-mixture objective; finally an EM refresh that
/// becomes the scoring mixture. Uses config.K and config.num_segments as given (M = 0 selects M).
TrainingResult surrogate_train(const Dataset& train, const TrainingConfig& config);

/// surrogate_train with K = 0 resolved by held-out energy of the training normals.
TrainingResult train_model(const Dataset& train, const TrainingConfig& config);

struct ObjectiveBounds {
  double lower = 0.0;  ///< o1
  double upper = 0.0;  ///< o3
  bool holds() const { return lower <= upper; }
};

/// Full objective at the model's parameters (with the estimator's memberships over the whole set).
JointLoss full_objective(std::span<const Segment> segments, const TrainedModel& model);

/// (o1, o3) for a trained model on its training set.
ObjectiveBounds objective_bounds(const Dataset& train, const TrainedModel& model);

void to_json(nlohmann::json& j, const TrainingConfig& config);
void from_json(const nlohmann::json& j, TrainingConfig& config);
void to_json(nlohmann::json& j, const TrainingTrace& trace);

}  // namespace seq2gmm
