#include "dlstm/evaluation.hpp"

#include <cmath>
#include <stdexcept>

#include "dlstm/certifier.hpp"

namespace dlstm {

double fit_index(const Matrix& y_pred, const Matrix& y_true, int washout) {
  if (y_pred.rows() != y_true.rows() || y_pred.cols() != y_true.cols())
    throw std::invalid_argument("fit_index: prediction and reference shapes differ");
  if (washout < 0 || washout + 1 >= y_true.rows())
    throw std::invalid_argument("fit_index: sequence not longer than washout");

  const Eigen::RowVectorXd mean = y_true.bottomRows(y_true.rows() - washout - 1).colwise().mean();
  double err_sum = 0.0, dev_sum = 0.0;
  for (Index k = washout + 1; k < y_true.rows(); ++k) {
    err_sum += (y_pred.row(k) - y_true.row(k)).norm();
    dev_sum += (y_true.row(k) - mean).norm();
  }
  if (dev_sum == 0.0)
    throw std::invalid_argument("fit_index: reference output is constant after washout");
  return 100.0 * (1.0 - err_sum / dev_sum);
}

EvalResult evaluate(const DeepLstmModel& m, const Experiment& test, int washout) {
  m.validate();
  if (test.u.cols() != m.n_u)
    throw std::invalid_argument("evaluate: dataset input width " + std::to_string(test.u.cols()) +
                                " does not match model n_u " + std::to_string(m.n_u));
  if (test.y.cols() != m.output_size())
    throw std::invalid_argument("evaluate: dataset output width " +
                                std::to_string(test.y.cols()) + " does not match model n_y " +
                                std::to_string(m.output_size()));

  EvalResult res;
  res.washout = washout;
  res.t = test.t;
  res.y_true = test.y;
  res.y_pred = simulate_outputs(m, ModelState::zero(m), test.u);
  res.fit_percent = fit_index(res.y_pred, res.y_true, washout);
  for (Index c = 0; c < test.y.cols(); ++c)
    res.per_channel_fit.push_back(fit_index(res.y_pred.col(c), res.y_true.col(c), washout));

  const Index T = test.y.rows() - 1;
  double sum = 0.0;
  for (Index k = washout + 1; k <= T; ++k)
    sum += (res.y_pred.row(k) - res.y_true.row(k)).squaredNorm();
  res.test_mse = sum / static_cast<double>(T - washout);
  res.certified = nu(m).maxCoeff() < 0.0;
  return res;
}

}  // namespace dlstm
