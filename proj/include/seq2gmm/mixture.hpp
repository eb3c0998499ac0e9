#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace seq2gmm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Full-covariance Gaussian mixture over latent vectors.
struct GmmParams {
  Vector phi;                  ///< mixture weights, sum to 1
  std::vector<Vector> mu;
  std::vector<Matrix> sigma;   ///< regularized covariances
  double eps = 1e-6;

  int K() const { return static_cast<int>(phi.size()); }
  int dim() const { return mu.empty() ? 0 : static_cast<int>(mu.front().size()); }
};

/// Throws ArgumentError/NumericalError if shapes disagree, weights are off the simplex or a covariance is not PD.
void validate_gmm(const GmmParams& params);

/// Per-component precomputation: inverse Cholesky factor and normalizing constant.
class GmmDensity {
 public:
  explicit GmmDensity(const GmmParams& params);

  /// log(Phi_k) + log N(y | mu_k, Sigma_k) for every component.
  Vector log_joint(const Vector& y) const;
  /// -log sum_k Phi_k N(y | mu_k, Sigma_k), evaluated by log-sum-exp.
  double energy(const Vector& y) const;
  /// Posterior membership probabilities.
  Vector posterior(const Vector& y) const;

  const Matrix& chol_inverse(int k) const { return chol_inverse_[static_cast<std::size_t>(k)]; }
  /// -0.5 * log|2 pi Sigma_k|
  double log_norm(int k) const { return log_norm_[static_cast<std::size_t>(k)]; }
  const GmmParams& params() const { return params_; }

 private:
  GmmParams params_;
  std::vector<Matrix> chol_inverse_;
  std::vector<double> log_norm_;
};

double log_sum_exp(const Vector& values);

double sample_energy(const Vector& y, const GmmParams& params);
double mean_energy(const std::vector<Vector>& ys, const GmmParams& params);

/// Weighted moments of the latent set under soft assignments `gamma` (N x K).
/// A component with total weight below 1e-12 is re-seeded at a random point with the global covariance.
GmmParams mixture_stats(const std::vector<Vector>& ys, const Matrix& gamma, double eps, std::uint64_t seed = 0);

struct KMeansResult {
  std::vector<int> labels;
  std::vector<Vector> centroids;
  double inertia = 0.0;
  int iterations = 0;
};

/// k-means++ seeding followed by Lloyd iterations. `restarts` independent seedings, lowest inertia wins.
KMeansResult kmeans(const std::vector<Vector>& points, int K, std::uint64_t seed, int max_iters = 100,
                    int restarts = 10);

Matrix one_hot(const std::vector<int>& labels, int K);

struct EmResult {
  GmmParams params;
  std::vector<double> mean_energy_trace;  ///< starts with the initial parameters' mean energy
  int iterations = 0;
};

/// EM refinement. Stops once an iteration improves the mean energy by less than `tol`;
/// an iteration that would raise it is discarded, so the trace never increases.
EmResult em_refine(const std::vector<Vector>& ys, const GmmParams& init, int max_iters = 200, double tol = 1e-6);

/// K-means hard assignments turned into a GMM and refined by EM.
EmResult fit_gmm(const std::vector<Vector>& ys, int K, double eps, std::uint64_t seed, int max_iters = 200,
                 double tol = 1e-6);

void to_json(nlohmann::json& j, const GmmParams& params);
void from_json(const nlohmann::json& j, GmmParams& params);

}  // namespace seq2gmm
