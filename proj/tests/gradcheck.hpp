#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "seq2gmm/networks.hpp"

/// Central-difference check of every parameter block. Returns the worst block-level relative
/// error ||fd - analytic|| / max(||fd||, ||analytic||, 1e-8) and reports its block name.
inline double gradient_check(seq2gmm::NetworkParams& params,
                             const std::function<double(seq2gmm::NetworkParams&, seq2gmm::NetworkParams*)>& loss,
                             std::string* worst_block = nullptr, double step = 1e-5) {
  auto grads = seq2gmm::zeros_like(params);
  loss(params, &grads);
  auto pb = seq2gmm::parameter_blocks(params);
  auto gb = seq2gmm::parameter_blocks(grads);
  double worst = 0.0;
  for (std::size_t b = 0; b < pb.size(); ++b) {
    seq2gmm::Matrix& w = *pb[b].second;
    seq2gmm::Matrix fd(w.rows(), w.cols());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double original = w.data()[i];
      w.data()[i] = original + step;
      const double up = loss(params, nullptr);
      w.data()[i] = original - step;
      const double down = loss(params, nullptr);
      w.data()[i] = original;
      fd.data()[i] = (up - down) / (2.0 * step);
    }
    const seq2gmm::Matrix& an = *gb[b].second;
    const double scale = std::max({fd.norm(), an.norm(), 1e-8});
    const double rel = (fd - an).norm() / scale;
    if (rel > worst) {
      worst = rel;
      if (worst_block) *worst_block = pb[b].first;
    }
  }
  return worst;
}

/// Fills every block with uniform values in (-scale, scale).
inline void randomize(seq2gmm::NetworkParams& params, std::uint64_t seed, double scale = 0.5) {
  std::uint64_t state = seed;
  for (auto& [name, m] : seq2gmm::parameter_blocks(params)) {
    for (Eigen::Index i = 0; i < m->size(); ++i) {
      state = state * 6364136223846793005ULL + 1442695040888963407ULL;
      m->data()[i] = scale * (2.0 * static_cast<double>(state >> 11) * 0x1.0p-53 - 1.0);
    }
  }
}
