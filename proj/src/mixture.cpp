#include "seq2gmm/mixture.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <limits>
#include <numbers>

#include "seq2gmm/errors.hpp"
#include "seq2gmm/matrix_json.hpp"
#include "seq2gmm/random.hpp"

namespace seq2gmm {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

void validate_gmm(const GmmParams& params) {
  const int K = params.K();
  if (K < 1) throw ArgumentError("mixture needs at least one component");
  if (static_cast<int>(params.mu.size()) != K || static_cast<int>(params.sigma.size()) != K) {
    throw ArgumentError("mixture component arrays disagree with K");
  }
  const auto d = params.mu.front().size();
  for (int k = 0; k < K; ++k) {
    const auto& mu = params.mu[static_cast<std::size_t>(k)];
    const auto& sigma = params.sigma[static_cast<std::size_t>(k)];
    if (mu.size() != d || sigma.rows() != d || sigma.cols() != d) throw ArgumentError("mixture shape mismatch");
    if (!mu.allFinite() || !sigma.allFinite()) throw NumericalError("mixture parameters are not finite");
    if (params.phi[k] < 0.0) throw ArgumentError("negative mixture weight");
  }
  if (std::abs(params.phi.sum() - 1.0) > 1e-9) throw ArgumentError("mixture weights do not sum to 1");
}

GmmDensity::GmmDensity(const GmmParams& params) : params_(params) {
  validate_gmm(params_);
  const int K = params_.K();
  const double d = params_.dim();
  for (int k = 0; k < K; ++k) {
    const Matrix& sigma = params_.sigma[static_cast<std::size_t>(k)];
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("covariance of component " + std::to_string(k) + " is not positive definite");
    }
    Matrix L = llt.matrixL();
    double log_det = 2.0 * L.diagonal().array().log().sum();
    if (!std::isfinite(log_det)) {
      throw NumericalError("covariance of component " + std::to_string(k) + " is singular");
    }
    chol_inverse_.push_back(L.triangularView<Eigen::Lower>().solve(Matrix::Identity(L.rows(), L.cols())));
    log_norm_.push_back(-0.5 * (d * kLog2Pi + log_det));
  }
}

Vector GmmDensity::log_joint(const Vector& y) const {
  const int K = params_.K();
  Vector out(K);
  for (int k = 0; k < K; ++k) {
    const auto idx = static_cast<std::size_t>(k);
    Vector z = chol_inverse_[idx] * (y - params_.mu[idx]);
    const double phi = params_.phi[k];
    out[k] = (phi > 0.0 ? std::log(phi) : -std::numeric_limits<double>::infinity()) - 0.5 * z.squaredNorm() +
             log_norm_[idx];
  }
  return out;
}

double log_sum_exp(const Vector& values) {
  const double m = values.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((values.array() - m).exp().sum());
}

double GmmDensity::energy(const Vector& y) const { return -log_sum_exp(log_joint(y)); }

Vector GmmDensity::posterior(const Vector& y) const {
  Vector lj = log_joint(y);
  const double lse = log_sum_exp(lj);
  return (lj.array() - lse).exp();
}

double sample_energy(const Vector& y, const GmmParams& params) { return GmmDensity(params).energy(y); }

double mean_energy(const std::vector<Vector>& ys, const GmmParams& params) {
  if (ys.empty()) throw ArgumentError("mean energy of an empty set");
  GmmDensity density(params);
  double total = 0.0;
  for (const auto& y : ys) total += density.energy(y);
  return total / static_cast<double>(ys.size());
}

GmmParams mixture_stats(const std::vector<Vector>& ys, const Matrix& gamma, double eps, std::uint64_t seed) {
  const auto n = static_cast<Eigen::Index>(ys.size());
  if (n == 0) throw ArgumentError("mixture_stats needs at least one point");
  const auto K = gamma.cols();
  if (gamma.rows() != n) throw ArgumentError("responsibility rows do not match the point count");
  if (n < K) throw ArgumentError("fewer points than mixture components");
  const auto d = ys.front().size();

  GmmParams params;
  params.eps = eps;
  params.phi = Vector::Zero(K);
  const Matrix identity = Matrix::Identity(d, d);

  Vector global_mean = Vector::Zero(d);
  for (const auto& y : ys) global_mean += y;
  global_mean /= static_cast<double>(n);

  Rng rng(seed);
  for (Eigen::Index k = 0; k < K; ++k) {
    double weight = 0.0;
    Vector mean = Vector::Zero(d);
    for (Eigen::Index i = 0; i < n; ++i) {
      weight += gamma(i, k);
      mean += gamma(i, k) * ys[static_cast<std::size_t>(i)];
    }
    params.phi[k] = weight / static_cast<double>(n);
    Matrix cov = Matrix::Zero(d, d);
    if (weight < 1e-12) {
      static std::atomic<bool> warned{false};
      if (!warned.exchange(true)) {
        std::cerr << "warning: mixture component " << k << " is empty; re-seeding it (repeats not reported)\n";
      }
      mean = ys[static_cast<std::size_t>(uniform_index(rng, static_cast<std::uint64_t>(n)))];
      for (const auto& y : ys) cov += (y - global_mean) * (y - global_mean).transpose();
      cov /= static_cast<double>(n);
    } else {
      mean /= weight;
      for (Eigen::Index i = 0; i < n; ++i) {
        Vector diff = ys[static_cast<std::size_t>(i)] - mean;
        cov.noalias() += gamma(i, k) * diff * diff.transpose();
      }
      cov /= weight;
    }
    cov = 0.5 * (cov + cov.transpose()) + eps * identity;
    params.mu.push_back(std::move(mean));
    params.sigma.push_back(std::move(cov));
  }
  params.phi /= params.phi.sum();
  return params;
}

namespace {

double squared_distance(const Vector& a, const Vector& b) { return (a - b).squaredNorm(); }

int nearest(const Vector& p, const std::vector<Vector>& centroids, double& best_dist) {
  int best = 0;
  best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    double dist = squared_distance(p, centroids[c]);
    if (dist < best_dist) {
      best_dist = dist;
      best = static_cast<int>(c);
    }
  }
  return best;
}

std::vector<Vector> kmeans_pp_seed(const std::vector<Vector>& points, int K, Rng& rng) {
  const std::size_t n = points.size();
  std::vector<Vector> centroids;
  std::vector<bool> chosen(n, false);
  std::size_t first = uniform_index(rng, n);
  centroids.push_back(points[first]);
  chosen[first] = true;
  std::vector<double> dist(n);
  while (static_cast<int>(centroids.size()) < K) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centroids) best = std::min(best, squared_distance(points[i], c));
      dist[i] = chosen[i] ? 0.0 : best;
      total += dist[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      double target = uniform01(rng) * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (dist[i] <= 0.0) continue;
        acc += dist[i];
        pick = i;
        if (acc > target) break;
      }
    } else {
      // Every remaining point coincides with a centroid: pick uniformly among the unchosen.
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < n; ++i) {
        if (!chosen[i]) free.push_back(i);
      }
      pick = free[uniform_index(rng, free.size())];
    }
    chosen[pick] = true;
    centroids.push_back(points[pick]);
  }
  return centroids;
}

KMeansResult lloyd(const std::vector<Vector>& points, std::vector<Vector> centroids, int max_iters) {
  const std::size_t n = points.size();
  const auto K = centroids.size();
  KMeansResult result;
  result.labels.assign(n, -1);
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    std::vector<double> dists(n);
    for (std::size_t i = 0; i < n; ++i) {
      int label = nearest(points[i], centroids, dists[i]);
      if (label != result.labels[i]) {
        result.labels[i] = label;
        changed = true;
      }
    }
    // Repair empty clusters by stealing the point farthest from its centroid.
    std::vector<std::size_t> sizes(K, 0);
    for (int label : result.labels) ++sizes[static_cast<std::size_t>(label)];
    for (std::size_t k = 0; k < K; ++k) {
      if (sizes[k] > 0) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (sizes[static_cast<std::size_t>(result.labels[i])] < 2) continue;
        if (far == n || dists[i] > dists[far]) far = i;
      }
      --sizes[static_cast<std::size_t>(result.labels[far])];
      result.labels[far] = static_cast<int>(k);
      dists[far] = 0.0;
      sizes[k] = 1;
      changed = true;
    }
    result.iterations = iter + 1;
    for (std::size_t k = 0; k < K; ++k) centroids[k].setZero();
    for (std::size_t i = 0; i < n; ++i) centroids[static_cast<std::size_t>(result.labels[i])] += points[i];
    for (std::size_t k = 0; k < K; ++k) centroids[k] /= static_cast<double>(sizes[k]);
    if (!changed) break;
  }
  result.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    result.inertia += squared_distance(points[i], centroids[static_cast<std::size_t>(result.labels[i])]);
  }
  result.centroids = std::move(centroids);
  return result;
}

}  // namespace

KMeansResult kmeans(const std::vector<Vector>& points, int K, std::uint64_t seed, int max_iters, int restarts) {
  if (K < 1) throw ArgumentError("kmeans needs K >= 1");
  if (points.size() < static_cast<std::size_t>(K)) {
    throw ArgumentError("kmeans with K=" + std::to_string(K) + " on " + std::to_string(points.size()) + " points");
  }
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, restarts); ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    auto result = lloyd(points, kmeans_pp_seed(points, K, rng), max_iters);
    if (result.inertia < best.inertia) best = std::move(result);
  }
  return best;
}

Matrix one_hot(const std::vector<int>& labels, int K) {
  Matrix gamma = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), K);
  for (std::size_t i = 0; i < labels.size(); ++i) gamma(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  return gamma;
}

EmResult em_refine(const std::vector<Vector>& ys, const GmmParams& init, int max_iters, double tol) {
  EmResult result;
  result.params = init;
  double current = mean_energy(ys, init);
  result.mean_energy_trace.push_back(current);
  const auto n = static_cast<Eigen::Index>(ys.size());
  for (int iter = 0; iter < max_iters; ++iter) {
    GmmDensity density(result.params);
    Matrix gamma(n, result.params.K());
    for (Eigen::Index i = 0; i < n; ++i) gamma.row(i) = density.posterior(ys[static_cast<std::size_t>(i)]).transpose();
    GmmParams next = mixture_stats(ys, gamma, init.eps, static_cast<std::uint64_t>(iter));
    const double energy = mean_energy(ys, next);
    if (!std::isfinite(energy) || energy > current) break;
    result.params = std::move(next);
    result.mean_energy_trace.push_back(energy);
    result.iterations = iter + 1;
    const double improvement = current - energy;
    current = energy;
    if (improvement < tol) break;
  }
  return result;
}

EmResult fit_gmm(const std::vector<Vector>& ys, int K, double eps, std::uint64_t seed, int max_iters, double tol) {
  auto clusters = kmeans(ys, K, seed);
  auto init = mixture_stats(ys, one_hot(clusters.labels, K), eps, seed);
  return em_refine(ys, init, max_iters, tol);
}

void to_json(nlohmann::json& j, const GmmParams& params) {
  j = nlohmann::json::object();
  j["K"] = params.K();
  j["dim"] = params.dim();
  j["eps"] = params.eps;
  j["phi"] = vector_to_json(params.phi);
  j["mu"] = nlohmann::json::array();
  j["Sigma"] = nlohmann::json::array();
  for (int k = 0; k < params.K(); ++k) {
    j["mu"].push_back(vector_to_json(params.mu[static_cast<std::size_t>(k)]));
    j["Sigma"].push_back(matrix_to_json(params.sigma[static_cast<std::size_t>(k)]));
  }
}

void from_json(const nlohmann::json& j, GmmParams& params) {
  params.eps = j.at("eps").get<double>();
  params.phi = vector_from_json(j.at("phi"));
  params.mu.clear();
  params.sigma.clear();
  for (const auto& m : j.at("mu")) params.mu.push_back(vector_from_json(m));
  for (const auto& s : j.at("Sigma")) params.sigma.push_back(matrix_from_json(s));
  if (params.K() != j.at("K").get<int>()) throw ArgumentError("mixture K does not match its arrays");
  validate_gmm(params);
}

}  // namespace seq2gmm
