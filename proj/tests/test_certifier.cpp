#include <doctest.h>

#include <Eigen/SVD>
#include <cmath>

#include "dlstm/certifier.hpp"
#include "dlstm/model.hpp"
#include "dlstm/rng.hpp"
#include "helpers.hpp"

using namespace dlstm;
using test_helpers::random_admissible_input;
using test_helpers::random_certified_model;
using test_helpers::random_state_in_invariant_set;

TEST_CASE("augmented infinity norm") {
  CHECK(inf_norm_augmented(Matrix::Zero(2, 3), Matrix::Zero(2, 2), Vector::Zero(2)) == 0.0);

  Matrix W(1, 2), U(1, 1);
  W << 1.0, -2.0;
  U << 3.0;
  Vector b(1);
  b << -4.0;
  CHECK(inf_norm_augmented(W, U, b) == 10.0);

  // Permuting columns leaves the row sums unchanged.
  Matrix Wp(1, 2);
  Wp << -2.0, 1.0;
  CHECK(inf_norm_augmented(Wp, U, b) == 10.0);

  CHECK_THROWS_AS(inf_norm_augmented(Matrix::Zero(2, 1), Matrix::Zero(3, 3), Vector::Zero(2)),
                  std::invalid_argument);
}

TEST_CASE("spectral norm basics") {
  CHECK(spectral_norm(Matrix::Identity(5, 5)) == doctest::Approx(1.0).epsilon(1e-12));
  Matrix D = Matrix::Zero(2, 2);
  D(0, 0) = 3.0;
  D(1, 1) = -5.0;
  CHECK(spectral_norm(D) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("spectral norm matches an SVD oracle") {
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix M(8, 8);
    for (Index i = 0; i < 8; ++i)
      for (Index j = 0; j < 8; ++j) M(i, j) = rng.uniform(-1.0, 1.0);
    const double oracle = Eigen::BDCSVD<Matrix>(M).singularValues()(0);
    CHECK(spectral_norm(M) == doctest::Approx(oracle).epsilon(1e-8));
    CHECK(spectral_norm_power_iteration(M) == doctest::Approx(oracle).epsilon(1e-8));
  }
  // Large matrix exercises the power-iteration path of spectral_norm.
  Matrix big(100, 20);
  for (Index i = 0; i < big.rows(); ++i)
    for (Index j = 0; j < big.cols(); ++j) big(i, j) = rng.uniform(-1.0, 1.0);
  const double oracle = Eigen::BDCSVD<Matrix>(big).singularValues()(0);
  CHECK(spectral_norm(big) == doctest::Approx(oracle).epsilon(1e-8));
}

TEST_CASE("layer bounds at zero weights") {
  const LayerBounds b = layer_bounds(LayerWeights::zero(4, 2));
  CHECK(b.sigma_f_bar == 0.5);
  CHECK(b.sigma_i_bar == 0.5);
  CHECK(b.sigma_z_bar == 0.5);
  CHECK(b.phi_r_bar == 0.0);
  CHECK(b.c_bar == 0.0);
  CHECK(b.h_bar == 0.0);
  CHECK(b.alpha_bar == 0.0);
}

TEST_CASE("layer bounds with only a squashed-input bias") {
  LayerWeights w = LayerWeights::zero(2, 1);
  w.b_r.setConstant(3.0);
  const LayerBounds b = layer_bounds(w);
  CHECK(b.phi_r_bar == doctest::Approx(std::tanh(3.0)).epsilon(1e-15));
  CHECK(b.c_bar == doctest::Approx(std::tanh(3.0)).epsilon(1e-15));  // 0.5 * phi_r / 0.5
  CHECK(b.h_bar == doctest::Approx(std::tanh(std::tanh(3.0))).epsilon(1e-15));
}

TEST_CASE("gate bounds are monotone in the gate's weights") {
  Rng rng(17);
  LayerWeights w = LayerWeights::zero(3, 2);
  for (auto member : kLayerMatrixMembers) {
    Matrix& M = w.*member;
    for (Index i = 0; i < M.rows(); ++i)
      for (Index j = 0; j < M.cols(); ++j) M(i, j) = rng.uniform(-0.5, 0.5);
  }
  const LayerBounds before = layer_bounds(w);
  w.W_f *= 2.0;
  w.U_f *= 2.0;
  w.b_f *= 2.0;
  CHECK(layer_bounds(w).sigma_f_bar >= before.sigma_f_bar);
}

TEST_CASE("nu at zero weights") {
  const DeepLstmModel m = DeepLstmModel::zero(1, 2, {4, 4});
  const Vector v = nu(m);
  REQUIRE(v.size() == 4);
  CHECK(v(0) == -0.5);
  CHECK(v(1) == -1.0);
  CHECK(v(2) == -0.5);
  CHECK(v(3) == -1.0);
}

TEST_CASE("an inflated recurrent matrix breaks the conditions") {
  DeepLstmModel m = random_model(1, 1, {4, 4}, 23, 0.5);
  m.layers[0].U_r *= 1e3;
  CHECK(nu(m).maxCoeff() >= 0.0);
}

TEST_CASE("cascade matrices for a single layer") {
  const DeepLstmModel m = random_model(2, 1, {4}, 29, 0.6);
  auto [A, B] = cascade_matrices(m);
  REQUIRE(A.rows() == 2);
  REQUIRE(B.cols() == 1);
  const LayerBounds b = layer_bounds(m.layers[0]);
  const double n_Uz = spectral_norm(m.layers[0].U_z);
  CHECK(A(0, 0) == doctest::Approx(b.sigma_f_bar));
  CHECK(A(0, 1) == doctest::Approx(b.alpha_bar));
  CHECK(A(1, 0) == doctest::Approx(b.sigma_z_bar * b.sigma_f_bar));
  CHECK(A(1, 1) == doctest::Approx(b.sigma_z_bar * b.alpha_bar + 0.25 * b.h_bar * n_Uz));
  const double beta = 0.25 * b.c_bar * spectral_norm(m.layers[0].W_f) +
                      b.sigma_i_bar * spectral_norm(m.layers[0].W_r) +
                      0.25 * b.phi_r_bar * spectral_norm(m.layers[0].W_i);
  CHECK(B(0, 0) == doctest::Approx(beta));
  CHECK(B(1, 0) ==
        doctest::Approx(b.sigma_z_bar * beta + 0.25 * b.h_bar * spectral_norm(m.layers[0].W_z)));
}

TEST_CASE("cascade blocks at zero weights") {
  const DeepLstmModel m = DeepLstmModel::zero(1, 1, {3, 3});
  auto [A, B] = cascade_matrices(m);
  Matrix expect = Matrix::Zero(4, 4);
  expect(0, 0) = 0.5;
  expect(1, 0) = 0.25;
  expect(2, 2) = 0.5;
  expect(3, 2) = 0.25;
  CHECK(A.isApprox(expect));
  CHECK(B.isZero());
}

TEST_CASE("entries above the block diagonal are exactly zero") {
  const DeepLstmModel m = random_model(1, 1, {3, 4, 2}, 31, 0.5);
  auto [A, B] = cascade_matrices(m);
  for (Index bi = 0; bi < 3; ++bi)
    for (Index bj = bi + 1; bj < 3; ++bj)
      CHECK(A.block<2, 2>(2 * bi, 2 * bj).isZero(0.0));
}

TEST_CASE("satisfied certificate implies Schur stability") {
  for (int trial = 0; trial < 10; ++trial) {
    const DeepLstmModel m =
        random_certified_model(1, 1, {4, 4}, 4000 + static_cast<std::uint64_t>(trial), -1e-6);
    const StabilityCertificate cert = certify(m);
    REQUIRE(cert.satisfied);
    CHECK(cert.schur_radius < 1.0);
  }
}

TEST_CASE("iss gain at zero weights is zero") {
  const DeepLstmModel m = DeepLstmModel::zero(1, 1, {3, 3});
  CHECK(iss_gain(m) == 0.0);
}

TEST_CASE("iss gain requires a satisfied certificate") {
  DeepLstmModel m = random_model(1, 1, {3}, 37, 0.5);
  m.layers[0].U_r *= 1e3;
  CHECK_THROWS_WITH_AS(iss_gain(m), "certificate unsatisfied; gain undefined",
                       std::runtime_error);
}

TEST_CASE("iss gain is nonnegative") {
  for (int trial = 0; trial < 5; ++trial) {
    const DeepLstmModel m =
        random_certified_model(2, 1, {3, 3}, 5000 + static_cast<std::uint64_t>(trial), -0.01);
    CHECK(iss_gain(m) >= 0.0);
  }
}

TEST_CASE("nu is continuous in the weights") {
  const DeepLstmModel m = random_model(1, 2, {4, 4}, 41, 0.6);
  const Vector base = nu(m);
  DeepLstmModel perturbed = m;
  for (auto& layer : perturbed.layers) {
    for (auto member : kLayerMatrixMembers) (layer.*member).array() += 1e-9;
    for (auto member : kLayerVectorMembers) (layer.*member).array() += 1e-9;
  }
  const Vector shifted = nu(perturbed);
  CHECK((shifted - base).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("certified models contract trajectories") {
  Rng rng(43);
  const DeepLstmModel m = random_certified_model(1, 1, {3, 3}, 47, -0.05);
  ModelState xa = random_state_in_invariant_set(m, rng);
  ModelState xb = random_state_in_invariant_set(m, rng);
  const double d0 = state_distance(xa, xb);
  REQUIRE(d0 > 0.0);
  for (int k = 0; k < 500; ++k) {
    const Vector u = random_admissible_input(1, rng);
    xa = model_step(m, xa, u).first;
    xb = model_step(m, xb, u).first;
  }
  CHECK(state_distance(xa, xb) < 1e-6 * d0);
}
