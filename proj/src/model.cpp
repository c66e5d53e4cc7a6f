#include "dlstm/model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "dlstm/rng.hpp"

namespace dlstm {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

std::string dim_msg(const char* op, const char* operand, Index got, Index want) {
  std::ostringstream os;
  os << op << ": " << operand << " has size " << got << ", expected " << want;
  return os.str();
}

}  // namespace

LayerWeights LayerWeights::zero(Index n_c, Index n_in) {
  LayerWeights w;
  for (auto member : kLayerMatrixMembers) {
    const Index cols = (member == &LayerWeights::W_f || member == &LayerWeights::W_i ||
                        member == &LayerWeights::W_z || member == &LayerWeights::W_r)
                           ? n_in
                           : n_c;
    w.*member = Matrix::Zero(n_c, cols);
  }
  for (auto member : kLayerVectorMembers) w.*member = Vector::Zero(n_c);
  return w;
}

LayerState LayerState::zero(Index n_c) {
  return LayerState{Vector::Zero(n_c), Vector::Zero(n_c)};
}

std::vector<Index> DeepLstmModel::cell_sizes() const {
  std::vector<Index> out;
  out.reserve(layers.size());
  for (const auto& l : layers) out.push_back(l.cell_size());
  return out;
}

void DeepLstmModel::validate() const {
  require(!layers.empty(), "model: must have at least one layer");
  static constexpr const char* mat_names[8] = {"W_f", "W_i", "W_z", "W_r",
                                               "U_f", "U_i", "U_z", "U_r"};
  static constexpr const char* vec_names[4] = {"b_f", "b_i", "b_z", "b_r"};
  Index expected_in = n_u;
  for (size_t l = 0; l < layers.size(); ++l) {
    const auto& w = layers[l];
    const Index n_c = w.U_f.rows();
    for (size_t m = 0; m < kLayerMatrixMembers.size(); ++m) {
      const Matrix& M = w.*kLayerMatrixMembers[m];
      const Index want_cols = m < 4 ? expected_in : n_c;
      std::ostringstream tag;
      tag << "layer " << l + 1 << " " << mat_names[m];
      require(M.rows() == n_c, dim_msg("model", tag.str().c_str(), M.rows(), n_c));
      require(M.cols() == want_cols, dim_msg("model", tag.str().c_str(), M.cols(), want_cols));
      require(M.allFinite(), "model: layer " + std::to_string(l + 1) + " " + mat_names[m] +
                                 " contains non-finite entries");
    }
    for (size_t m = 0; m < kLayerVectorMembers.size(); ++m) {
      const Vector& v = w.*kLayerVectorMembers[m];
      std::ostringstream tag;
      tag << "layer " << l + 1 << " " << vec_names[m];
      require(v.size() == n_c, dim_msg("model", tag.str().c_str(), v.size(), n_c));
      require(v.allFinite(), "model: layer " + std::to_string(l + 1) + " " + vec_names[m] +
                                 " contains non-finite entries");
    }
    expected_in = n_c;
  }
  require(U_o.cols() == layers.back().cell_size(),
          dim_msg("model", "U_o column count", U_o.cols(), layers.back().cell_size()));
  require(b_o.size() == U_o.rows(), dim_msg("model", "b_o", b_o.size(), U_o.rows()));
  require(U_o.allFinite() && b_o.allFinite(), "model: output map contains non-finite entries");
}

DeepLstmModel DeepLstmModel::zero(Index n_u, Index n_y, const std::vector<Index>& cells) {
  DeepLstmModel m;
  m.n_u = n_u;
  Index in = n_u;
  for (Index n_c : cells) {
    m.layers.push_back(LayerWeights::zero(n_c, in));
    in = n_c;
  }
  m.U_o = Matrix::Zero(n_y, in);
  m.b_o = Vector::Zero(n_y);
  return m;
}

ModelState ModelState::zero(const DeepLstmModel& m) {
  ModelState x;
  x.per_layer.reserve(m.layers.size());
  for (const auto& l : m.layers) x.per_layer.push_back(LayerState::zero(l.cell_size()));
  return x;
}

Vector ModelState::flatten() const {
  Index n = 0;
  for (const auto& s : per_layer) n += s.c.size() + s.h.size();
  Vector out(n);
  Index at = 0;
  for (const auto& s : per_layer) {
    out.segment(at, s.c.size()) = s.c;
    at += s.c.size();
    out.segment(at, s.h.size()) = s.h;
    at += s.h.size();
  }
  return out;
}

Gates layer_gates(const LayerWeights& w, const Vector& u, const Vector& h) {
  require(u.size() == w.input_size(), dim_msg("layer_gates", "u", u.size(), w.input_size()));
  require(h.size() == w.cell_size(), dim_msg("layer_gates", "h", h.size(), w.cell_size()));
  Gates g;
  g.f = ((w.W_f * u + w.U_f * h + w.b_f).array()).logistic();
  g.i = ((w.W_i * u + w.U_i * h + w.b_i).array()).logistic();
  g.z = ((w.W_z * u + w.U_z * h + w.b_z).array()).logistic();
  g.r = ((w.W_r * u + w.U_r * h + w.b_r).array()).tanh();
  return g;
}

LayerState layer_step(const LayerWeights& w, const LayerState& s, const Vector& u) {
  require(s.c.size() == w.cell_size(), dim_msg("layer_step", "c", s.c.size(), w.cell_size()));
  require(s.h.size() == w.cell_size(), dim_msg("layer_step", "h", s.h.size(), w.cell_size()));
  const Gates g = layer_gates(w, u, s.h);
  LayerState next;
  next.c = g.f.cwiseProduct(s.c) + g.i.cwiseProduct(g.r);
  next.h = g.z.cwiseProduct(next.c.array().tanh().matrix());
  return next;
}

std::pair<ModelState, Vector> model_step(const DeepLstmModel& m, const ModelState& x,
                                         const Vector& u) {
  require(x.per_layer.size() == m.layers.size(),
          dim_msg("model_step", "state layer count", static_cast<Index>(x.per_layer.size()),
                  m.num_layers()));
  require(u.size() == m.n_u, dim_msg("model_step", "u", u.size(), m.n_u));
  const Vector y = m.U_o * x.per_layer.back().h + m.b_o;
  ModelState next;
  next.per_layer.reserve(m.layers.size());
  const Vector* layer_in = &u;
  for (size_t l = 0; l < m.layers.size(); ++l) {
    next.per_layer.push_back(layer_step(m.layers[l], x.per_layer[l], *layer_in));
    layer_in = &next.per_layer.back().h;
  }
  return {std::move(next), y};
}

Trajectory simulate(const DeepLstmModel& m, const ModelState& x0,
                    const std::vector<Vector>& inputs) {
  Trajectory out;
  out.states.reserve(inputs.size());
  out.outputs.reserve(inputs.size());
  ModelState x = x0;
  for (const Vector& u : inputs) {
    auto [next, y] = model_step(m, x, u);
    out.outputs.push_back(std::move(y));
    out.states.push_back(std::move(next));
    x = out.states.back();
  }
  return out;
}

Matrix simulate_outputs(const DeepLstmModel& m, const ModelState& x0, const Matrix& inputs) {
  Matrix out(inputs.rows(), m.output_size());
  ModelState x = x0;
  for (Index k = 0; k < inputs.rows(); ++k) {
    auto [next, y] = model_step(m, x, inputs.row(k).transpose());
    out.row(k) = y.transpose();
    x = std::move(next);
  }
  return out;
}

DeepLstmModel random_model(Index n_u, Index n_y, const std::vector<Index>& cells,
                           std::uint64_t seed, double scale) {
  Rng rng(seed);
  DeepLstmModel m = DeepLstmModel::zero(n_u, n_y, cells);
  for (auto& layer : m.layers) {
    for (auto member : kLayerMatrixMembers) {
      Matrix& M = layer.*member;
      const double bound = scale / std::sqrt(static_cast<double>(M.cols()));
      for (Index i = 0; i < M.rows(); ++i)
        for (Index j = 0; j < M.cols(); ++j) M(i, j) = rng.uniform(-bound, bound);
    }
  }
  const double bound = scale / std::sqrt(static_cast<double>(m.U_o.cols()));
  for (Index i = 0; i < m.U_o.rows(); ++i)
    for (Index j = 0; j < m.U_o.cols(); ++j) m.U_o(i, j) = rng.uniform(-bound, bound);
  return m;
}

double state_distance(const ModelState& a, const ModelState& b) {
  double sq = 0.0;
  for (size_t l = 0; l < a.per_layer.size(); ++l) {
    sq += (a.per_layer[l].c - b.per_layer[l].c).squaredNorm();
    sq += (a.per_layer[l].h - b.per_layer[l].h).squaredNorm();
  }
  return std::sqrt(sq);
}

}  // namespace dlstm
