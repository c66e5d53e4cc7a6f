#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "dlstm/certifier.hpp"
#include "dlstm/model.hpp"
#include "dlstm/rng.hpp"
#include "dlstm/trainer.hpp"

namespace test_helpers {

using namespace dlstm;

// Scales all weights of a random model down until the stability margin
// drops to at most `target_margin`. Shrinking towards zero always reaches
// margin -0.5, so this terminates.
inline DeepLstmModel random_certified_model(Index n_u, Index n_y,
                                            const std::vector<Index>& cells,
                                            std::uint64_t seed, double target_margin) {
  DeepLstmModel m = random_model(n_u, n_y, cells, seed);
  for (int attempt = 0; attempt < 200; ++attempt) {
    if (nu(m).maxCoeff() <= target_margin) return m;
    for (auto& layer : m.layers) {
      for (auto member : kLayerMatrixMembers) layer.*member *= 0.8;
      for (auto member : kLayerVectorMembers) layer.*member *= 0.8;
    }
  }
  throw std::runtime_error("random_certified_model: failed to reach target margin");
}

// Uniform random state inside the invariant set of the model.
inline ModelState random_state_in_invariant_set(const DeepLstmModel& m, Rng& rng) {
  ModelState x = ModelState::zero(m);
  for (size_t l = 0; l < m.layers.size(); ++l) {
    const LayerBounds b = layer_bounds(m.layers[l]);
    for (Index j = 0; j < x.per_layer[l].c.size(); ++j) {
      x.per_layer[l].c(j) = rng.uniform(-b.c_bar, b.c_bar);
      x.per_layer[l].h(j) = rng.uniform(-b.h_bar, b.h_bar);
    }
  }
  return x;
}

inline Vector random_admissible_input(Index n_u, Rng& rng) {
  Vector u(n_u);
  for (Index j = 0; j < n_u; ++j) u(j) = rng.uniform(-1.0, 1.0);
  return u;
}

// Subsequences whose outputs come from a teacher model driven by random
// admissible inputs.
inline std::vector<Subsequence> teacher_batch(const DeepLstmModel& teacher, int count,
                                              int seq_len, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Subsequence> out;
  for (int s = 0; s < count; ++s) {
    Subsequence seq;
    seq.u.resize(seq_len + 1, teacher.n_u);
    for (Index k = 0; k <= seq_len; ++k)
      for (Index c = 0; c < teacher.n_u; ++c) seq.u(k, c) = rng.uniform(-1.0, 1.0);
    seq.y = simulate_outputs(teacher, ModelState::zero(teacher), seq.u);
    out.push_back(std::move(seq));
  }
  return out;
}

// Central finite differences over every parameter; returns the largest
// relative error against the analytic gradient. rel = |a-b| / max(|a|,|b|,1e-6).
inline double gradient_fd_max_rel_error(const DeepLstmModel& model,
                                        std::span<const Subsequence> batch,
                                        const TrainConfig& cfg, double step = 1e-5) {
  const DeepLstmModel grad = loss_gradient(model, batch, cfg);
  double worst = 0.0;
  DeepLstmModel probe = model;

  auto check_entry = [&](double& p, double analytic) {
    const double saved = p;
    p = saved + step;
    const double up = loss(probe, batch, cfg);
    p = saved - step;
    const double down = loss(probe, batch, cfg);
    p = saved;
    const double fd = (up - down) / (2.0 * step);
    const double rel = std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-6});
    worst = std::max(worst, rel);
  };

  for (size_t l = 0; l < model.layers.size(); ++l) {
    for (auto member : kLayerMatrixMembers) {
      Matrix& M = probe.layers[l].*member;
      const Matrix& G = grad.layers[l].*member;
      for (Index i = 0; i < M.rows(); ++i)
        for (Index j = 0; j < M.cols(); ++j) check_entry(M(i, j), G(i, j));
    }
    for (auto member : kLayerVectorMembers) {
      Vector& v = probe.layers[l].*member;
      const Vector& G = grad.layers[l].*member;
      for (Index i = 0; i < v.size(); ++i) check_entry(v(i), G(i));
    }
  }
  for (Index i = 0; i < probe.U_o.rows(); ++i)
    for (Index j = 0; j < probe.U_o.cols(); ++j) check_entry(probe.U_o(i, j), grad.U_o(i, j));
  for (Index i = 0; i < probe.b_o.size(); ++i) check_entry(probe.b_o(i), grad.b_o(i));
  return worst;
}

// Distance of the closest nu entry to the regularizer kink at -eps_nu.
inline double min_kink_distance(const DeepLstmModel& m, const TrainConfig& cfg) {
  return (nu(m).array() + cfg.eps_nu).abs().minCoeff();
}

}  // namespace test_helpers
