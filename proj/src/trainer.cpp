#include "dlstm/trainer.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "dlstm/certifier.hpp"
#include "dlstm/rng.hpp"

namespace dlstm {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

template <class Fn>
void zip_params(DeepLstmModel& a, const DeepLstmModel& b, Fn&& fn) {
  for (size_t l = 0; l < a.layers.size(); ++l) {
    for (auto member : kLayerMatrixMembers) fn(a.layers[l].*member, b.layers[l].*member);
    for (auto member : kLayerVectorMembers) fn(a.layers[l].*member, b.layers[l].*member);
  }
  fn(a.U_o, b.U_o);
  fn(a.b_o, b.b_o);
}

template <class Fn>
void zip_params3(DeepLstmModel& a, DeepLstmModel& b, const DeepLstmModel& c, Fn&& fn) {
  for (size_t l = 0; l < a.layers.size(); ++l) {
    for (auto member : kLayerMatrixMembers)
      fn(a.layers[l].*member, b.layers[l].*member, c.layers[l].*member);
    for (auto member : kLayerVectorMembers)
      fn(a.layers[l].*member, b.layers[l].*member, c.layers[l].*member);
  }
  fn(a.U_o, b.U_o, c.U_o);
  fn(a.b_o, b.b_o, c.b_o);
}

DeepLstmModel zero_like(const DeepLstmModel& m) {
  return DeepLstmModel::zero(m.n_u, m.output_size(), m.cell_sizes());
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::clamp<unsigned>(hw == 0 ? 1 : hw, 1, 16));
}

// ---------------------------------------------------------------------------
// BPTT through one subsequence.

// Per-layer forward trace, one column per time step. Column storage keeps
// the whole pass allocation-free inside the time loop.
struct LayerTrace {
  Matrix u_in;                       // n_in x T
  Matrix f, i, z, r;                 // n_c x T
  Matrix c_old, h_old, tanh_c_new;   // n_c x T
  Vector a;                          // preactivation scratch
  Vector d_hnew, d_cnew, dz, da_f, da_i, da_z, da_r;  // backward scratch
  Vector du;                         // gradient w.r.t. this layer's input
};

// Runs the free simulation from the zero state, accumulating the squared
// output error on [washout+1, T_s] into mse_sum and the loss gradient into
// grad. inv_norm = 1 / (|batch| * (T_s - washout)).
void sequence_gradient(const DeepLstmModel& m, const Subsequence& seq, int washout,
                       double inv_norm, DeepLstmModel& grad, double& mse_sum) {
  const Index L = m.num_layers();
  const Index T = seq.u.rows() - 1;
  const Index n_y = m.output_size();

  std::vector<LayerTrace> tr(static_cast<size_t>(L));
  for (Index l = 0; l < L; ++l) {
    LayerTrace& t = tr[static_cast<size_t>(l)];
    const Index n_c = m.layers[static_cast<size_t>(l)].cell_size();
    const Index n_in = m.layers[static_cast<size_t>(l)].input_size();
    t.u_in.resize(n_in, T);
    for (Matrix* mat : {&t.f, &t.i, &t.z, &t.r, &t.c_old, &t.h_old, &t.tanh_c_new})
      mat->resize(n_c, T);
    for (Vector* v : {&t.a, &t.d_hnew, &t.d_cnew, &t.dz, &t.da_f, &t.da_i, &t.da_z, &t.da_r})
      v->resize(n_c);
    t.du.resize(n_in);
  }
  Matrix h_last(m.layers.back().cell_size(), T + 1);  // last layer's h at time k
  h_last.col(0).setZero();

  ModelState x = ModelState::zero(m);
  for (Index k = 0; k < T; ++k) {
    for (Index l = 0; l < L; ++l) {
      LayerTrace& t = tr[static_cast<size_t>(l)];
      const LayerWeights& w = m.layers[static_cast<size_t>(l)];
      LayerState& s = x.per_layer[static_cast<size_t>(l)];
      if (l == 0)
        t.u_in.col(k) = seq.u.row(k).transpose();
      else
        t.u_in.col(k) = x.per_layer[static_cast<size_t>(l) - 1].h;  // already updated
      t.c_old.col(k) = s.c;
      t.h_old.col(k) = s.h;

      t.a.noalias() = w.W_f * t.u_in.col(k);
      t.a.noalias() += w.U_f * t.h_old.col(k);
      t.a += w.b_f;
      t.f.col(k) = t.a.array().logistic();
      t.a.noalias() = w.W_i * t.u_in.col(k);
      t.a.noalias() += w.U_i * t.h_old.col(k);
      t.a += w.b_i;
      t.i.col(k) = t.a.array().logistic();
      t.a.noalias() = w.W_z * t.u_in.col(k);
      t.a.noalias() += w.U_z * t.h_old.col(k);
      t.a += w.b_z;
      t.z.col(k) = t.a.array().logistic();
      t.a.noalias() = w.W_r * t.u_in.col(k);
      t.a.noalias() += w.U_r * t.h_old.col(k);
      t.a += w.b_r;
      t.r.col(k) = t.a.array().tanh();

      s.c.array() = t.f.col(k).array() * t.c_old.col(k).array() +
                    t.i.col(k).array() * t.r.col(k).array();
      t.tanh_c_new.col(k) = s.c.array().tanh();
      s.h.array() = t.z.col(k).array() * t.tanh_c_new.col(k).array();
    }
    h_last.col(k + 1) = x.per_layer.back().h;
  }

  // Output residuals; dy_k = 2 (y_hat - y) * inv_norm on the loss window.
  Matrix dy = Matrix::Zero(n_y, T + 1);
  Vector resid(n_y);
  for (Index k = washout + 1; k <= T; ++k) {
    resid.noalias() = m.U_o * h_last.col(k);
    resid += m.b_o - seq.y.row(k).transpose();
    mse_sum += resid.squaredNorm() * inv_norm;
    dy.col(k) = 2.0 * inv_norm * resid;
    grad.U_o.noalias() += dy.col(k) * h_last.col(k).transpose();
    grad.b_o += dy.col(k);
  }

  // State adjoints at the current time index, per layer.
  std::vector<Vector> dc(static_cast<size_t>(L)), dh(static_cast<size_t>(L));
  for (Index l = 0; l < L; ++l) {
    dc[static_cast<size_t>(l)] = Vector::Zero(m.layers[static_cast<size_t>(l)].cell_size());
    dh[static_cast<size_t>(l)] = Vector::Zero(m.layers[static_cast<size_t>(l)].cell_size());
  }
  dh[static_cast<size_t>(L - 1)].noalias() += m.U_o.transpose() * dy.col(T);

  for (Index k = T - 1; k >= 0; --k) {
    for (Index l = L - 1; l >= 0; --l) {
      LayerTrace& t = tr[static_cast<size_t>(l)];
      const LayerWeights& w = m.layers[static_cast<size_t>(l)];
      LayerWeights& gw = grad.layers[static_cast<size_t>(l)];

      t.d_hnew = dh[static_cast<size_t>(l)];
      if (l < L - 1) t.d_hnew += tr[static_cast<size_t>(l) + 1].du;

      // h_new = z . tanh(c_new)
      t.dz.array() = t.d_hnew.array() * t.tanh_c_new.col(k).array();
      t.d_cnew = dc[static_cast<size_t>(l)];
      t.d_cnew.array() += t.d_hnew.array() * t.z.col(k).array() *
                          (1.0 - t.tanh_c_new.col(k).array().square());

      // c_new = f . c_old + i . r, then the activation derivatives.
      t.da_f.array() = t.d_cnew.array() * t.c_old.col(k).array() * t.f.col(k).array() *
                       (1.0 - t.f.col(k).array());
      t.da_i.array() = t.d_cnew.array() * t.r.col(k).array() * t.i.col(k).array() *
                       (1.0 - t.i.col(k).array());
      t.da_z.array() = t.dz.array() * t.z.col(k).array() * (1.0 - t.z.col(k).array());
      t.da_r.array() =
          t.d_cnew.array() * t.i.col(k).array() * (1.0 - t.r.col(k).array().square());

      gw.W_f.noalias() += t.da_f * t.u_in.col(k).transpose();
      gw.W_i.noalias() += t.da_i * t.u_in.col(k).transpose();
      gw.W_z.noalias() += t.da_z * t.u_in.col(k).transpose();
      gw.W_r.noalias() += t.da_r * t.u_in.col(k).transpose();
      gw.U_f.noalias() += t.da_f * t.h_old.col(k).transpose();
      gw.U_i.noalias() += t.da_i * t.h_old.col(k).transpose();
      gw.U_z.noalias() += t.da_z * t.h_old.col(k).transpose();
      gw.U_r.noalias() += t.da_r * t.h_old.col(k).transpose();
      gw.b_f += t.da_f;
      gw.b_i += t.da_i;
      gw.b_z += t.da_z;
      gw.b_r += t.da_r;

      Vector& dhl = dh[static_cast<size_t>(l)];
      dhl.noalias() = w.U_f.transpose() * t.da_f;
      dhl.noalias() += w.U_i.transpose() * t.da_i;
      dhl.noalias() += w.U_z.transpose() * t.da_z;
      dhl.noalias() += w.U_r.transpose() * t.da_r;
      dc[static_cast<size_t>(l)].array() = t.d_cnew.array() * t.f.col(k).array();
      t.du.noalias() = w.W_f.transpose() * t.da_f;
      t.du.noalias() += w.W_i.transpose() * t.da_i;
      t.du.noalias() += w.W_z.transpose() * t.da_z;
      t.du.noalias() += w.W_r.transpose() * t.da_r;
    }
    if (k >= washout + 1)
      dh[static_cast<size_t>(L - 1)].noalias() += m.U_o.transpose() * dy.col(k);
  }
}

// ---------------------------------------------------------------------------
// Gradient of the stability regularizer through the norm bounds.

struct SpecNorm {
  double value = 0.0;
  Matrix subgrad;  // u1 v1^T from the converged singular pair
};

SpecNorm spec_norm_with_grad(const Matrix& M) {
  Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  SpecNorm out;
  out.value = svd.singularValues()(0);
  out.subgrad = svd.matrixU().col(0) * svd.matrixV().col(0).transpose();
  return out;
}

// Subgradient of ||[W U b]||_inf: sign pattern on the first row attaining
// the maximum absolute row sum.
void add_inf_norm_subgrad(const Matrix& W, const Matrix& U, const Vector& b, double weight,
                          Matrix& gW, Matrix& gU, Vector& gb) {
  const Vector row_sums =
      W.cwiseAbs().rowwise().sum() + U.cwiseAbs().rowwise().sum() + b.cwiseAbs();
  Index row = 0;
  row_sums.maxCoeff(&row);
  gW.row(row) += weight * W.row(row).array().sign().matrix();
  gU.row(row) += weight * U.row(row).array().sign().matrix();
  gb(row) += weight * (b(row) > 0.0 ? 1.0 : (b(row) < 0.0 ? -1.0 : 0.0));
}

// Computes nu and rho(nu) and accumulates d rho / d weights into grad.
std::pair<Vector, double> regularizer_with_gradient(const DeepLstmModel& m,
                                                    const TrainConfig& cfg,
                                                    DeepLstmModel& grad) {
  const Index L = m.num_layers();
  const double inv_n = 1.0 / static_cast<double>(2 * L);
  Vector nu_values(2 * L);
  double rho = 0.0;

  for (Index l = 0; l < L; ++l) {
    const LayerWeights& w = m.layers[static_cast<size_t>(l)];
    LayerWeights& gw = grad.layers[static_cast<size_t>(l)];

    const double a_f = inf_norm_augmented(w.W_f, w.U_f, w.b_f);
    const double a_i = inf_norm_augmented(w.W_i, w.U_i, w.b_i);
    const double a_z = inf_norm_augmented(w.W_z, w.U_z, w.b_z);
    const double a_r = inf_norm_augmented(w.W_r, w.U_r, w.b_r);
    const double s_f = sigmoid(a_f), s_i = sigmoid(a_i), s_z = sigmoid(a_z);
    const double p = std::tanh(a_r);
    const double one_mf = 1.0 - s_f;
    const double c_bar = s_i * p / one_mf;
    const double h_bar = std::tanh(c_bar);

    const SpecNorm nUf = spec_norm_with_grad(w.U_f);
    const SpecNorm nUi = spec_norm_with_grad(w.U_i);
    const SpecNorm nUz = spec_norm_with_grad(w.U_z);
    const SpecNorm nUr = spec_norm_with_grad(w.U_r);

    const double alpha = 0.25 * c_bar * nUf.value + s_i * nUr.value + 0.25 * p * nUi.value;
    const double nu1 =
        s_f + s_z * alpha + 0.25 * h_bar * nUz.value * (1.0 - s_f) - 1.0;
    const double nu2 = 0.25 * s_f * h_bar * nUz.value - 1.0;
    nu_values(2 * l) = nu1;
    nu_values(2 * l + 1) = nu2;

    const double shifted1 = nu1 + cfg.eps_nu;
    const double shifted2 = nu2 + cfg.eps_nu;
    rho += inv_n * (cfg.pi_upper * std::max(shifted1, 0.0) + cfg.pi_lower * std::min(shifted1, 0.0));
    rho += inv_n * (cfg.pi_upper * std::max(shifted2, 0.0) + cfg.pi_lower * std::min(shifted2, 0.0));

    // Left derivative at the kink: the pi_lower branch applies at shifted = 0.
    const double w1 = inv_n * (shifted1 > 0.0 ? cfg.pi_upper : cfg.pi_lower);
    const double w2 = inv_n * (shifted2 > 0.0 ? cfg.pi_upper : cfg.pi_lower);

    double d_sf = w1 * (1.0 - 0.25 * h_bar * nUz.value) + w2 * 0.25 * h_bar * nUz.value;
    const double d_sz = w1 * alpha;
    const double d_alpha = w1 * s_z;
    const double d_hbar =
        w1 * 0.25 * nUz.value * (1.0 - s_f) + w2 * 0.25 * s_f * nUz.value;
    const double d_nUz = w1 * 0.25 * h_bar * (1.0 - s_f) + w2 * 0.25 * s_f * h_bar;

    double d_cbar = d_alpha * 0.25 * nUf.value;
    double d_si = d_alpha * nUr.value;
    double d_p = d_alpha * 0.25 * nUi.value;
    const double d_nUf = d_alpha * 0.25 * c_bar;
    const double d_nUr = d_alpha * s_i;
    const double d_nUi = d_alpha * 0.25 * p;

    d_cbar += d_hbar * (1.0 - h_bar * h_bar);
    d_si += d_cbar * p / one_mf;
    d_p += d_cbar * s_i / one_mf;
    d_sf += d_cbar * s_i * p / (one_mf * one_mf);

    const double d_af = d_sf * s_f * (1.0 - s_f);
    const double d_ai = d_si * s_i * (1.0 - s_i);
    const double d_az = d_sz * s_z * (1.0 - s_z);
    const double d_ar = d_p * (1.0 - p * p);

    add_inf_norm_subgrad(w.W_f, w.U_f, w.b_f, d_af, gw.W_f, gw.U_f, gw.b_f);
    add_inf_norm_subgrad(w.W_i, w.U_i, w.b_i, d_ai, gw.W_i, gw.U_i, gw.b_i);
    add_inf_norm_subgrad(w.W_z, w.U_z, w.b_z, d_az, gw.W_z, gw.U_z, gw.b_z);
    add_inf_norm_subgrad(w.W_r, w.U_r, w.b_r, d_ar, gw.W_r, gw.U_r, gw.b_r);

    gw.U_f += d_nUf * nUf.subgrad;
    gw.U_i += d_nUi * nUi.subgrad;
    gw.U_z += d_nUz * nUz.subgrad;
    gw.U_r += d_nUr * nUr.subgrad;
  }
  return {std::move(nu_values), rho};
}

// Partial gradient + MSE over a contiguous chunk of a batch.
struct ChunkResult {
  DeepLstmModel grad;
  double mse = 0.0;
};

ChunkResult chunk_gradient(const DeepLstmModel& m, std::span<const Subsequence> chunk,
                           int washout, double inv_norm) {
  ChunkResult out{zero_like(m), 0.0};
  for (const Subsequence& seq : chunk)
    sequence_gradient(m, seq, washout, inv_norm, out.grad, out.mse);
  return out;
}

std::pair<DeepLstmModel, double> batch_gradient_mse(const DeepLstmModel& m,
                                                    std::span<const Subsequence> batch,
                                                    int washout, int threads) {
  const Index T = batch.empty() ? 0 : batch[0].u.rows() - 1;
  const double inv_norm = 1.0 / (static_cast<double>(batch.size()) *
                                 static_cast<double>(T - washout));
  const int n_chunks = std::min<int>(threads, static_cast<int>(batch.size()));
  if (n_chunks <= 1) {
    ChunkResult r = chunk_gradient(m, batch, washout, inv_norm);
    return {std::move(r.grad), r.mse};
  }
  std::vector<std::future<ChunkResult>> futures;
  const size_t per = (batch.size() + static_cast<size_t>(n_chunks) - 1) /
                     static_cast<size_t>(n_chunks);
  for (size_t at = 0; at < batch.size(); at += per) {
    const size_t len = std::min(per, batch.size() - at);
    futures.push_back(std::async(std::launch::async, [&m, batch, at, len, washout, inv_norm] {
      return chunk_gradient(m, batch.subspan(at, len), washout, inv_norm);
    }));
  }
  // Fixed-order summation keeps results reproducible for a given thread count.
  DeepLstmModel grad = zero_like(m);
  double mse = 0.0;
  for (auto& f : futures) {
    ChunkResult r = f.get();
    zip_params(grad, r.grad, [](auto& g, const auto& pg) { g += pg; });
    mse += r.mse;
  }
  return {std::move(grad), mse};
}

double parallel_mse(const DeepLstmModel& m, std::span<const Subsequence> set, int washout,
                    int threads) {
  const Index T = set.empty() ? 0 : set[0].u.rows() - 1;
  const double inv_norm =
      1.0 / (static_cast<double>(set.size()) * static_cast<double>(T - washout));
  const int n_chunks = std::min<int>(threads, static_cast<int>(set.size()));
  auto chunk_mse = [&](std::span<const Subsequence> chunk) {
    double sum = 0.0;
    const ModelState x0 = ModelState::zero(m);
    for (const Subsequence& seq : chunk) {
      const Matrix y_hat = simulate_outputs(m, x0, seq.u);
      for (Index k = washout + 1; k <= T; ++k)
        sum += (y_hat.row(k) - seq.y.row(k)).squaredNorm() * inv_norm;
    }
    return sum;
  };
  if (n_chunks <= 1) return chunk_mse(set);
  std::vector<std::future<double>> futures;
  const size_t per =
      (set.size() + static_cast<size_t>(n_chunks) - 1) / static_cast<size_t>(n_chunks);
  for (size_t at = 0; at < set.size(); at += per) {
    const size_t len = std::min(per, set.size() - at);
    futures.push_back(std::async(std::launch::async,
                                 [&, at, len] { return chunk_mse(set.subspan(at, len)); }));
  }
  double sum = 0.0;
  for (auto& f : futures) sum += f.get();
  return sum;
}

void check_batch(std::span<const Subsequence> batch, int washout, const char* op) {
  if (batch.empty()) throw std::invalid_argument(std::string(op) + ": empty batch");
  const Index T = batch[0].u.rows() - 1;
  if (washout < 0 || washout >= T)
    throw std::invalid_argument(std::string(op) + ": washout " + std::to_string(washout) +
                                " not in [0, T_s)");
  for (const Subsequence& s : batch)
    if (s.u.rows() != T + 1 || s.y.rows() != T + 1)
      throw std::invalid_argument(std::string(op) + ": subsequence lengths differ");
}

}  // namespace

void TrainConfig::validate() const {
  if (washout < 0 || washout >= seq_len)
    throw std::invalid_argument("config: washout must satisfy 0 <= tau_w < T_s");
  if (!(pi_upper > pi_lower && pi_lower > 0.0))
    throw std::invalid_argument("config: need pi_upper > pi_lower > 0");
  if (eps_nu <= 0.0) throw std::invalid_argument("config: eps_nu must be positive");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (learning_rate <= 0.0) throw std::invalid_argument("config: learning_rate must be positive");
  if (max_epochs < 1) throw std::invalid_argument("config: max_epochs must be >= 1");
}

double mse_washout(const DeepLstmModel& m, std::span<const Subsequence> batch, int washout,
                   const ModelState& x0) {
  check_batch(batch, washout, "mse_washout");
  const Index T = batch[0].u.rows() - 1;
  const double inv_norm =
      1.0 / (static_cast<double>(batch.size()) * static_cast<double>(T - washout));
  double sum = 0.0;
  for (const Subsequence& seq : batch) {
    const Matrix y_hat = simulate_outputs(m, x0, seq.u);
    for (Index k = washout + 1; k <= T; ++k)
      sum += (y_hat.row(k) - seq.y.row(k)).squaredNorm() * inv_norm;
  }
  return sum;
}

double mse_washout(const DeepLstmModel& m, std::span<const Subsequence> batch, int washout) {
  return mse_washout(m, batch, washout, ModelState::zero(m));
}

double regularizer(const Vector& nu_values, const TrainConfig& cfg) {
  if (nu_values.size() == 0) return 0.0;
  double sum = 0.0;
  for (Index i = 0; i < nu_values.size(); ++i) {
    const double shifted = nu_values(i) + cfg.eps_nu;
    sum += cfg.pi_upper * std::max(shifted, 0.0) + cfg.pi_lower * std::min(shifted, 0.0);
  }
  return sum / static_cast<double>(nu_values.size());
}

double loss(const DeepLstmModel& m, std::span<const Subsequence> batch, const TrainConfig& cfg) {
  return mse_washout(m, batch, cfg.washout) + regularizer(nu(m), cfg);
}

DeepLstmModel loss_gradient(const DeepLstmModel& m, std::span<const Subsequence> batch,
                            const TrainConfig& cfg) {
  check_batch(batch, cfg.washout, "loss_gradient");
  auto [grad, mse] = batch_gradient_mse(m, batch, cfg.washout, 1);
  regularizer_with_gradient(m, cfg, grad);
  return grad;
}

void rmsprop_update(DeepLstmModel& params, DeepLstmModel& rms, const DeepLstmModel& grad,
                    const TrainConfig& cfg) {
  zip_params3(params, rms, grad, [&](auto& p, auto& v, const auto& g) {
    v = cfg.rmsprop_decay * v + (1.0 - cfg.rmsprop_decay) * g.cwiseProduct(g);
    p -= (cfg.learning_rate * g.array() / (v.array().sqrt() + cfg.rmsprop_epsilon)).matrix();
  });
}

std::pair<DeepLstmModel, TrainReport> train(const DeepLstmModel& init,
                                            std::span<const Subsequence> train_set,
                                            std::span<const Subsequence> val_set,
                                            const TrainConfig& cfg) {
  cfg.validate();
  init.validate();
  check_batch(train_set, cfg.washout, "train");
  check_batch(val_set, cfg.washout, "train (validation set)");
  for (const Subsequence& s : train_set)
    if (s.u.cwiseAbs().maxCoeff() > 1.0 + 1e-12)
      throw std::invalid_argument("train: input not unity bounded; normalize the dataset");

  const int threads = resolve_threads(cfg.threads);
  Rng rng(cfg.rng_seed);

  DeepLstmModel model = init;
  DeepLstmModel rms = zero_like(model);  // running mean of squared gradients
  DeepLstmModel best = model;
  TrainReport report;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = 0;

  std::vector<size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::vector<Subsequence> batch(static_cast<size_t>(cfg.batch_size));

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    // Fisher-Yates shuffle, then fixed-size batches.
    for (size_t i = order.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0.0;
    int n_batches = 0;
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_size)) {
      const size_t len = std::min(static_cast<size_t>(cfg.batch_size), order.size() - at);
      batch.resize(len);
      for (size_t i = 0; i < len; ++i) batch[i] = train_set[order[at + i]];

      auto [grad, mse] = batch_gradient_mse(model, batch, cfg.washout, threads);
      auto [nu_values, rho] = regularizer_with_gradient(model, cfg, grad);
      const double batch_loss = mse + rho;
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(n_batches + 1));
      loss_sum += batch_loss;
      ++n_batches;

      rmsprop_update(model, rms, grad, cfg);
    }

    const double val_mse = parallel_mse(model, val_set, cfg.washout, threads);
    const double margin = nu(model).maxCoeff();
    report.epochs.push_back({epoch, loss_sum / n_batches, val_mse, margin});

    if (val_mse < best_val) {
      best_val = val_mse;
      best = model;
      best_epoch = epoch;
    }
    report.stopping_epoch = epoch;
    if (epoch - best_epoch >= cfg.patience) break;
  }

  report.best_epoch = best_epoch;
  report.best_val_mse = best_val;
  report.final_margin = nu(best).maxCoeff();
  return {std::move(best), std::move(report)};
}

}  // namespace dlstm
