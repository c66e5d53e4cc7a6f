#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <utility>
#include <vector>

namespace dlstm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Weights of one LSTM layer: four input matrices (n_c x n_in), four
// recurrent matrices (n_c x n_c) and four bias vectors (n_c).
struct LayerWeights {
  Matrix W_f, W_i, W_z, W_r;
  Matrix U_f, U_i, U_z, U_r;
  Vector b_f, b_i, b_z, b_r;

  Index cell_size() const { return U_f.rows(); }
  Index input_size() const { return W_f.cols(); }

  static LayerWeights zero(Index n_c, Index n_in);
};

// Pointer-to-member tables used to iterate over all parameters of a layer
// (optimizer updates, serialization, gradient accumulation).
inline constexpr std::array<Matrix LayerWeights::*, 8> kLayerMatrixMembers = {
    &LayerWeights::W_f, &LayerWeights::W_i, &LayerWeights::W_z, &LayerWeights::W_r,
    &LayerWeights::U_f, &LayerWeights::U_i, &LayerWeights::U_z, &LayerWeights::U_r};
inline constexpr std::array<Vector LayerWeights::*, 4> kLayerVectorMembers = {
    &LayerWeights::b_f, &LayerWeights::b_i, &LayerWeights::b_z, &LayerWeights::b_r};

struct LayerState {
  Vector c;  // cell state
  Vector h;  // hidden state

  static LayerState zero(Index n_c);
};

// Cascade of L LSTM layers plus the affine output map y = U_o h^(L) + b_o.
// Layer 1 is fed the model input; layer l > 1 is fed the updated hidden
// state of layer l-1.
struct DeepLstmModel {
  std::vector<LayerWeights> layers;
  Matrix U_o;  // n_y x n_c of last layer
  Vector b_o;  // n_y
  Index n_u = 0;

  Index num_layers() const { return static_cast<Index>(layers.size()); }
  Index output_size() const { return U_o.rows(); }
  std::vector<Index> cell_sizes() const;

  // Throws std::invalid_argument naming the first inconsistent dimension.
  void validate() const;

  static DeepLstmModel zero(Index n_u, Index n_y, const std::vector<Index>& cells);
};

struct ModelState {
  std::vector<LayerState> per_layer;

  static ModelState zero(const DeepLstmModel& m);
  Vector flatten() const;  // [c1; h1; ...; cL; hL]
};

struct Gates {
  Vector f, i, z, r;
};

// Gate evaluation: sigma(W u + U h + b) for f, i, z and
// tanh(W u + U h + b) for the squashed input r.
Gates layer_gates(const LayerWeights& w, const Vector& u, const Vector& h);

// One layer update: c+ = f.c + i.r, h+ = z.tanh(c+).
LayerState layer_step(const LayerWeights& w, const LayerState& s, const Vector& u);

// One full model update. The output is read from the incoming state's last
// hidden layer (y_k = U_o h_k^(L) + b_o, i.e. before the update).
std::pair<ModelState, Vector> model_step(const DeepLstmModel& m, const ModelState& x,
                                         const Vector& u);

struct Trajectory {
  // states[k] is the state after step k (x_{k+1}); outputs[k] is the output
  // at time k, computed from x_k before stepping.
  std::vector<ModelState> states;
  std::vector<Vector> outputs;
};

Trajectory simulate(const DeepLstmModel& m, const ModelState& x0,
                    const std::vector<Vector>& inputs);

// Matrix convenience overload: inputs is T x n_u, returns outputs as T x n_y.
Matrix simulate_outputs(const DeepLstmModel& m, const ModelState& x0, const Matrix& inputs);

// Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] weight matrices, zero biases.
DeepLstmModel random_model(Index n_u, Index n_y, const std::vector<Index>& cells,
                           std::uint64_t seed, double scale = 1.0);

// Euclidean distance between two model states (concatenated layer states).
double state_distance(const ModelState& a, const ModelState& b);

}  // namespace dlstm
