#pragma once

#include "dlstm/dataset.hpp"
#include "dlstm/model.hpp"

namespace dlstm {

struct EvalResult {
  double fit_percent = 0.0;
  std::vector<double> per_channel_fit;
  double test_mse = 0.0;
  Matrix y_pred;  // T x n_y free-run outputs
  Matrix y_true;
  Vector t;
  int washout = 0;
  bool certified = false;
};

// FIT index on [tau_w+1, T): 100 * (1 - sum_k ||y_k - y_k_true|| /
// sum_k ||y_k_true - mean||), with the per-channel temporal mean of the
// reference outputs. 100 means exact prediction. Throws on a constant
// reference (zero denominator).
double fit_index(const Matrix& y_pred, const Matrix& y_true, int washout);

// Free-run simulation from the zero state over the whole test input.
EvalResult evaluate(const DeepLstmModel& m, const Experiment& test, int washout);

}  // namespace dlstm
