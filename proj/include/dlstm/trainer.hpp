#pragma once

#include <cstdint>
#include <span>
#include <utility>

#include "dlstm/dataset.hpp"
#include "dlstm/model.hpp"

namespace dlstm {

struct TrainConfig {
  int seq_len = 200;   // T_s
  int washout = 20;    // tau_w, steps excluded from the loss
  int batch_size = 50;
  double learning_rate = 1e-3;
  double rmsprop_decay = 0.99;
  double rmsprop_epsilon = 1e-8;
  double pi_upper = 2e-4;   // penalty slope above the clearance
  double pi_lower = 1e-6;   // reward slope below the clearance
  double eps_nu = 0.02;     // constraint clearance
  int max_epochs = 200;
  int patience = 50;
  std::uint64_t rng_seed = 1;
  int threads = 0;  // 0 = hardware concurrency (clamped to 16)

  void validate() const;  // throws on inconsistent fields
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_mse = 0.0;
  double nu_margin = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int stopping_epoch = 0;
  int best_epoch = 0;
  double best_val_mse = 0.0;
  double final_margin = 0.0;
};

// Free-run simulation MSE over the post-washout window, averaged over
// subsequences and steps. Every subsequence starts from x0.
double mse_washout(const DeepLstmModel& m, std::span<const Subsequence> batch, int washout,
                   const ModelState& x0);
double mse_washout(const DeepLstmModel& m, std::span<const Subsequence> batch, int washout);

// Piecewise-linear stability penalty on the nu vector.
double regularizer(const Vector& nu_values, const TrainConfig& cfg);

double loss(const DeepLstmModel& m, std::span<const Subsequence> batch, const TrainConfig& cfg);

// Exact gradient of loss() through the unrolled simulation (BPTT over the
// full subsequence, washout steps propagating state but contributing no
// output error) plus the regularizer gradient through the norm bounds.
// The gradient shares the model's shape.
DeepLstmModel loss_gradient(const DeepLstmModel& m, std::span<const Subsequence> batch,
                            const TrainConfig& cfg);

// One RMSProp step over all parameters; rms holds the running mean of
// squared gradients and shares the model's shape.
void rmsprop_update(DeepLstmModel& params, DeepLstmModel& rms, const DeepLstmModel& grad,
                    const TrainConfig& cfg);

std::pair<DeepLstmModel, TrainReport> train(const DeepLstmModel& init,
                                            std::span<const Subsequence> train_set,
                                            std::span<const Subsequence> val_set,
                                            const TrainConfig& cfg);

}  // namespace dlstm
