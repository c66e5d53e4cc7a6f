#include <doctest.h>

#include <cmath>

#include "dlstm/certifier.hpp"
#include "dlstm/trainer.hpp"
#include "helpers.hpp"

using namespace dlstm;
using namespace test_helpers;

namespace {

TrainConfig small_config(int seq_len, int washout) {
  TrainConfig cfg;
  cfg.seq_len = seq_len;
  cfg.washout = washout;
  cfg.batch_size = 2;
  cfg.threads = 1;
  return cfg;
}

}  // namespace

TEST_CASE("mse is zero for a perfect model") {
  const DeepLstmModel m = random_certified_model(1, 2, {3}, 3, -0.01);
  const auto batch = teacher_batch(m, 3, 12, 4);
  CHECK(mse_washout(m, batch, 2) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("constant residual gives the squared norm of the target") {
  const DeepLstmModel m = DeepLstmModel::zero(1, 2, {3});
  Vector v(2);
  v << 0.3, -0.4;
  std::vector<Subsequence> batch(2);
  for (auto& seq : batch) {
    seq.u = Matrix::Zero(11, 1);
    seq.y = v.transpose().replicate(11, 1);
  }
  CHECK(mse_washout(m, batch, 3) == doctest::Approx(v.squaredNorm()).epsilon(1e-14));
}

TEST_CASE("mse matches a hand-rolled sum on a tiny case") {
  const DeepLstmModel m = random_model(1, 2, {2}, 7, 0.6);
  auto batch = teacher_batch(m, 1, 4, 8);
  // Corrupt the targets so the residual is nonzero but known.
  const Matrix y_hat = simulate_outputs(m, ModelState::zero(m), batch[0].u);
  batch[0].y = y_hat;
  batch[0].y(2, 0) += 0.5;
  batch[0].y(3, 1) -= 0.25;
  batch[0].y(4, 0) += 0.1;
  const double expect = (0.25 + 0.0625 + 0.01) / (1.0 * (4 - 1));
  CHECK(mse_washout(m, batch, 1) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("mse rejects an empty batch") {
  const DeepLstmModel m = DeepLstmModel::zero(1, 1, {2});
  CHECK_THROWS_AS(mse_washout(m, {}, 0), std::invalid_argument);
}

TEST_CASE("regularizer vanishes exactly at the clearance") {
  TrainConfig cfg;
  Vector v = Vector::Constant(4, -cfg.eps_nu);
  CHECK(regularizer(v, cfg) == 0.0);
}

TEST_CASE("regularizer at nu = 0 with paper constants") {
  TrainConfig cfg;
  Vector v = Vector::Zero(1);
  CHECK(std::abs(regularizer(v, cfg) - 4e-6) < 1e-18);
}

TEST_CASE("regularizer rewards margins beyond the clearance") {
  TrainConfig cfg;
  Vector v = Vector::Constant(1, -0.5);
  const double rho = regularizer(v, cfg);
  CHECK(rho < 0.0);
  CHECK(rho == doctest::Approx(cfg.pi_lower * (-0.5 + cfg.eps_nu)).epsilon(1e-12));
}

TEST_CASE("loss is the sum of its parts") {
  const DeepLstmModel teacher = random_certified_model(1, 2, {3, 3}, 11, -0.01);
  const DeepLstmModel m = random_model(1, 2, {3, 3}, 12, 0.6);
  const auto batch = teacher_batch(teacher, 2, 10, 13);
  TrainConfig cfg = small_config(10, 2);
  CHECK(loss(m, batch, cfg) ==
        doctest::Approx(mse_washout(m, batch, 2) + regularizer(nu(m), cfg)).epsilon(1e-14));
}

TEST_CASE("loss gradient matches central finite differences") {
  const TrainConfig cfg = small_config(10, 2);
  for (std::uint64_t trial = 0; trial < 3; ++trial) {
    const DeepLstmModel teacher = random_certified_model(1, 2, {3, 3}, 100 + trial, -0.01);
    const DeepLstmModel m = random_model(1, 2, {3, 3}, 200 + trial, 0.6);
    REQUIRE(min_kink_distance(m, cfg) > 1e-6);
    CHECK(gradient_fd_max_rel_error(m, teacher_batch(teacher, 2, 10, 300 + trial), cfg) < 1e-4);
  }
}

TEST_CASE("spectral norm gradient is the top singular outer product") {
  // Checked through the full loss: inflate U_z so the nu_1 terms dominate,
  // then finite differences validate the u1 v1^T subgradient path.
  TrainConfig cfg = small_config(6, 1);
  DeepLstmModel m = random_model(1, 1, {3}, 17, 0.8);
  m.layers[0].U_z *= 1.5;  // distinct singular values with high probability
  const DeepLstmModel teacher = random_certified_model(1, 1, {3}, 18, -0.01);
  REQUIRE(min_kink_distance(m, cfg) > 1e-6);
  CHECK(gradient_fd_max_rel_error(m, teacher_batch(teacher, 2, 6, 19), cfg) < 1e-4);
}

TEST_CASE("washout steps contribute no output error") {
  const DeepLstmModel teacher = random_certified_model(1, 1, {3}, 23, -0.01);
  const DeepLstmModel m = random_model(1, 1, {3}, 24, 0.6);
  TrainConfig cfg = small_config(8, 3);
  auto batch = teacher_batch(teacher, 1, 8, 25);
  const double base = loss(m, batch, cfg);
  batch[0].y(1, 0) += 100.0;  // k = 1 <= tau_w = 3
  batch[0].y(3, 0) -= 42.0;
  CHECK(loss(m, batch, cfg) == base);
}

TEST_CASE("rmsprop leaves weights unchanged for a zero gradient") {
  TrainConfig cfg;
  DeepLstmModel m = random_model(1, 1, {3}, 29, 0.6);
  const DeepLstmModel before = m;
  DeepLstmModel rms = DeepLstmModel::zero(1, 1, {3});
  const DeepLstmModel grad = DeepLstmModel::zero(1, 1, {3});
  rmsprop_update(m, rms, grad, cfg);
  CHECK(m.layers[0].U_f == before.layers[0].U_f);
  CHECK(m.U_o == before.U_o);
  CHECK(m.b_o == before.b_o);
}

TEST_CASE("training is reproducible for a fixed seed") {
  const DeepLstmModel teacher = random_certified_model(1, 1, {3, 3}, 31, -0.01);
  const auto train_set = teacher_batch(teacher, 12, 20, 32);
  const auto val_set = teacher_batch(teacher, 4, 20, 33);
  TrainConfig cfg = small_config(20, 4);
  cfg.batch_size = 4;
  cfg.max_epochs = 3;
  cfg.rng_seed = 99;
  const DeepLstmModel init = random_model(1, 1, {3, 3}, 34, 0.5);

  auto [m1, r1] = train(init, train_set, val_set, cfg);
  auto [m2, r2] = train(init, train_set, val_set, cfg);
  CHECK(m1.U_o == m2.U_o);
  CHECK(m1.layers[1].U_z == m2.layers[1].U_z);
  REQUIRE(r1.epochs.size() == r2.epochs.size());
  for (size_t e = 0; e < r1.epochs.size(); ++e) {
    CHECK(r1.epochs[e].train_loss == r2.epochs[e].train_loss);
    CHECK(r1.epochs[e].val_mse == r2.epochs[e].val_mse);
  }
}

TEST_CASE("returned weights score the minimum recorded validation mse") {
  const DeepLstmModel teacher = random_certified_model(1, 1, {3}, 41, -0.01);
  const auto train_set = teacher_batch(teacher, 10, 15, 42);
  const auto val_set = teacher_batch(teacher, 4, 15, 43);
  TrainConfig cfg = small_config(15, 3);
  cfg.batch_size = 5;
  cfg.max_epochs = 5;
  auto [model, report] = train(random_model(1, 1, {3}, 44, 0.5), train_set, val_set, cfg);
  double min_recorded = std::numeric_limits<double>::infinity();
  for (const auto& e : report.epochs) min_recorded = std::min(min_recorded, e.val_mse);
  CHECK(report.best_val_mse == min_recorded);
  CHECK(mse_washout(model, val_set, cfg.washout) == doctest::Approx(min_recorded).epsilon(1e-12));
}

TEST_CASE("20-epoch smoke run improves the best validation mse") {
  const DeepLstmModel teacher = random_certified_model(1, 2, {4, 4}, 51, -0.02);
  const auto train_set = teacher_batch(teacher, 50, 30, 52);
  const auto val_set = teacher_batch(teacher, 10, 30, 53);
  TrainConfig cfg = small_config(30, 5);
  cfg.batch_size = 10;
  cfg.max_epochs = 20;
  cfg.learning_rate = 2e-3;
  auto [model, report] = train(random_model(1, 2, {4, 4}, 54, 0.5), train_set, val_set, cfg);
  REQUIRE(report.epochs.size() >= 2);
  CHECK(report.best_val_mse < report.epochs.front().val_mse);
}

TEST_CASE("training rejects unnormalized inputs") {
  const DeepLstmModel teacher = random_certified_model(1, 1, {3}, 61, -0.01);
  auto train_set = teacher_batch(teacher, 4, 10, 62);
  const auto val_set = teacher_batch(teacher, 2, 10, 63);
  train_set[0].u(3, 0) = 2.5;
  TrainConfig cfg = small_config(10, 2);
  cfg.max_epochs = 1;
  CHECK_THROWS_WITH_AS(train(random_model(1, 1, {3}, 64, 0.5), train_set, val_set, cfg),
                       doctest::Contains("unity bounded"), std::invalid_argument);
}

TEST_CASE("config validation names the broken field") {
  TrainConfig cfg;
  cfg.washout = cfg.seq_len;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("washout"), std::invalid_argument);
  TrainConfig cfg2;
  cfg2.pi_lower = cfg2.pi_upper;
  CHECK_THROWS_AS(cfg2.validate(), std::invalid_argument);
}
