#pragma once

#include "dlstm/model.hpp"

namespace dlstm {

// Per-layer constants entering the stability conditions: gate bounds,
// invariant-set radii and the recurrent interaction bound alpha_bar.
struct LayerBounds {
  double phi_r_bar = 0.0;
  double sigma_f_bar = 0.0;
  double sigma_i_bar = 0.0;
  double sigma_z_bar = 0.0;
  double c_bar = 0.0;
  double h_bar = 0.0;
  double alpha_bar = 0.0;
};

struct StabilityCertificate {
  std::vector<LayerBounds> per_layer;
  Vector nu;          // 2L inequality left-hand sides; all < 0 certifies
  Matrix cascade_A;   // 2L x 2L, block lower-triangular
  Matrix cascade_B;   // 2L x 1
  double schur_radius = 0.0;  // spectral radius of cascade_A
  double iss_gain = 0.0;      // NaN when not satisfied
  bool satisfied = false;
  double margin = 0.0;  // max_i nu_i
};

// Induced infinity norm of the horizontal concatenation [W U b]:
// max over rows of the absolute row sum.
double inf_norm_augmented(const Matrix& W, const Matrix& U, const Vector& b);

// Largest singular value. Small matrices (max dimension <= 64) go through a
// full SVD; larger ones through power iteration on M^T M (tol 1e-12,
// capped at 1e4 iterations).
double spectral_norm(const Matrix& M);

// Power-iteration path, exposed for testing against the SVD oracle.
double spectral_norm_power_iteration(const Matrix& M);

LayerBounds layer_bounds(const LayerWeights& w);

// The 2L stability inequalities; entries 2l-2 and 2l-1 (0-based) belong to
// layer l.
Vector nu(const DeepLstmModel& m);

// Cascade comparison matrices: A (2L x 2L, block lower-triangular with the
// per-layer 2x2 contraction blocks on the diagonal) and B (2L x 1 input
// sensitivity column).
std::pair<Matrix, Matrix> cascade_matrices(const DeepLstmModel& m);

// Asymptotic input-to-state gain ||(I - A)^{-1} B||_2. Throws
// std::runtime_error("certificate unsatisfied; gain undefined") when
// nu(m) has a nonnegative entry.
double iss_gain(const DeepLstmModel& m);

StabilityCertificate certify(const DeepLstmModel& m);

}  // namespace dlstm
