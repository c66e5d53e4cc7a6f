#include "dlstm/certifier.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dlstm {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// 2x2 contraction block of one layer and its 2x1 input-sensitivity column.
struct LayerBlocks {
  Eigen::Matrix2d A;
  Eigen::Vector2d B;
};

LayerBlocks layer_blocks(const LayerWeights& w, const LayerBounds& b) {
  const double n_Uz = spectral_norm(w.U_z);
  const double n_Wz = spectral_norm(w.W_z);
  const double beta = 0.25 * b.c_bar * spectral_norm(w.W_f) +
                      b.sigma_i_bar * spectral_norm(w.W_r) +
                      0.25 * b.phi_r_bar * spectral_norm(w.W_i);
  LayerBlocks blk;
  blk.A << b.sigma_f_bar, b.alpha_bar,
      b.sigma_z_bar * b.sigma_f_bar, b.sigma_z_bar * b.alpha_bar + 0.25 * b.h_bar * n_Uz;
  blk.B << beta, b.sigma_z_bar * beta + 0.25 * b.h_bar * n_Wz;
  return blk;
}

}  // namespace

double inf_norm_augmented(const Matrix& W, const Matrix& U, const Vector& b) {
  if (W.rows() != U.rows() || W.rows() != b.size())
    throw std::invalid_argument("inf_norm_augmented: row counts differ (W " +
                                std::to_string(W.rows()) + ", U " + std::to_string(U.rows()) +
                                ", b " + std::to_string(b.size()) + ")");
  const Vector row_sums =
      W.cwiseAbs().rowwise().sum() + U.cwiseAbs().rowwise().sum() + b.cwiseAbs();
  return row_sums.size() == 0 ? 0.0 : row_sums.maxCoeff();
}

double spectral_norm_power_iteration(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  const Matrix G = M.transpose() * M;  // Gram matrix; top eigenvalue = sigma_max^2
  Vector v = Vector::Ones(G.rows()).normalized();
  double lambda = 0.0;
  for (int it = 0; it < 10000; ++it) {
    Vector next = G * v;
    const double norm = next.norm();
    if (norm == 0.0) return 0.0;
    next /= norm;
    const double lambda_next = next.dot(G * next);
    if (std::abs(lambda_next - lambda) <= 1e-12 * std::max(1.0, std::abs(lambda_next))) {
      lambda = lambda_next;
      break;
    }
    lambda = lambda_next;
    v = next;
  }
  return std::sqrt(std::max(0.0, lambda));
}

double spectral_norm(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  if (std::max(M.rows(), M.cols()) <= 64)
    return Eigen::JacobiSVD<Matrix>(M).singularValues()(0);
  return spectral_norm_power_iteration(M);
}

LayerBounds layer_bounds(const LayerWeights& w) {
  LayerBounds b;
  b.phi_r_bar = std::tanh(inf_norm_augmented(w.W_r, w.U_r, w.b_r));
  b.sigma_f_bar = sigmoid(inf_norm_augmented(w.W_f, w.U_f, w.b_f));
  b.sigma_i_bar = sigmoid(inf_norm_augmented(w.W_i, w.U_i, w.b_i));
  b.sigma_z_bar = sigmoid(inf_norm_augmented(w.W_z, w.U_z, w.b_z));
  b.c_bar = b.sigma_i_bar * b.phi_r_bar / (1.0 - b.sigma_f_bar);
  b.h_bar = std::tanh(b.c_bar);
  b.alpha_bar = 0.25 * b.c_bar * spectral_norm(w.U_f) + b.sigma_i_bar * spectral_norm(w.U_r) +
                0.25 * b.phi_r_bar * spectral_norm(w.U_i);
  return b;
}

Vector nu(const DeepLstmModel& m) {
  const Index L = m.num_layers();
  Vector out(2 * L);
  for (Index l = 0; l < L; ++l) {
    const LayerBounds b = layer_bounds(m.layers[l]);
    const double n_Uz = spectral_norm(m.layers[l].U_z);
    out(2 * l) = b.sigma_f_bar + b.sigma_z_bar * b.alpha_bar + 0.25 * b.h_bar * n_Uz -
                 0.25 * b.sigma_f_bar * b.h_bar * n_Uz - 1.0;
    out(2 * l + 1) = 0.25 * b.sigma_f_bar * b.h_bar * n_Uz - 1.0;
  }
  return out;
}

std::pair<Matrix, Matrix> cascade_matrices(const DeepLstmModel& m) {
  const Index L = m.num_layers();
  std::vector<LayerBlocks> blocks;
  blocks.reserve(L);
  for (Index l = 0; l < L; ++l)
    blocks.push_back(layer_blocks(m.layers[l], layer_bounds(m.layers[l])));

  Matrix A = Matrix::Zero(2 * L, 2 * L);
  Matrix B = Matrix::Zero(2 * L, 1);
  for (Index l = 0; l < L; ++l) {
    A.block<2, 2>(2 * l, 2 * l) = blocks[l].A;
    // Input-difference path through the cascade: the layer-l input is the
    // updated hidden state of layer l-1, whose sensitivity unrolls into the
    // products of the scalar [0 1] B^(m) terms.
    for (Index j = 0; j < l; ++j) {
      double chain = 1.0;
      for (Index mm = j + 1; mm < l; ++mm) chain *= blocks[mm].B(1);
      const Eigen::RowVector2d A_tilde_j = blocks[j].A.row(1);
      A.block<2, 2>(2 * l, 2 * j) = blocks[l].B * (chain * A_tilde_j);
    }
    double chain = 1.0;
    for (Index mm = 0; mm < l; ++mm) chain *= blocks[mm].B(1);
    B.block<2, 1>(2 * l, 0) = chain * blocks[l].B;
  }
  return {std::move(A), std::move(B)};
}

double iss_gain(const DeepLstmModel& m) {
  const Vector v = nu(m);
  if (v.maxCoeff() >= 0.0) throw std::runtime_error("certificate unsatisfied; gain undefined");
  auto [A, B] = cascade_matrices(m);
  const Matrix gain_col =
      (Matrix::Identity(A.rows(), A.cols()) - A).partialPivLu().solve(B);
  return spectral_norm(gain_col);
}

StabilityCertificate certify(const DeepLstmModel& m) {
  StabilityCertificate cert;
  const Index L = m.num_layers();
  cert.per_layer.reserve(L);
  for (Index l = 0; l < L; ++l) cert.per_layer.push_back(layer_bounds(m.layers[l]));
  cert.nu = nu(m);
  std::tie(cert.cascade_A, cert.cascade_B) = cascade_matrices(m);
  cert.schur_radius = cert.cascade_A.eigenvalues().cwiseAbs().maxCoeff();
  cert.margin = cert.nu.maxCoeff();
  cert.satisfied = cert.margin < 0.0;
  cert.iss_gain = cert.satisfied
                      ? spectral_norm((Matrix::Identity(2 * L, 2 * L) - cert.cascade_A)
                                          .partialPivLu()
                                          .solve(cert.cascade_B))
                      : std::numeric_limits<double>::quiet_NaN();
  return cert;
}

}  // namespace dlstm
