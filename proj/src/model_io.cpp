#include "dlstm/model_io.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace dlstm {

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json matrix_to_json(const Matrix& m) {
  ordered_json rows = ordered_json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

ordered_json vector_to_json(const Vector& v) {
  ordered_json arr = ordered_json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Matrix matrix_from_json(const nlohmann::json& j, const std::string& name, Index rows,
                        Index cols) {
  if (!j.is_array() || static_cast<Index>(j.size()) != rows)
    throw std::runtime_error("model: " + name + " must have " + std::to_string(rows) + " rows");
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols)
      throw std::runtime_error("model: " + name + " row " + std::to_string(i) + " must have " +
                               std::to_string(cols) + " columns");
    for (Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<size_t>(c)].get<double>();
  }
  return m;
}

Vector vector_from_json(const nlohmann::json& j, const std::string& name, Index size) {
  if (!j.is_array() || static_cast<Index>(j.size()) != size)
    throw std::runtime_error("model: " + name + " must have length " + std::to_string(size));
  Vector v(size);
  for (Index i = 0; i < size; ++i) v(i) = j[static_cast<size_t>(i)].get<double>();
  return v;
}

constexpr const char* kMatrixKeys[8] = {"W_f", "W_i", "W_z", "W_r", "U_f", "U_i", "U_z", "U_r"};
constexpr const char* kVectorKeys[4] = {"b_f", "b_i", "b_z", "b_r"};

}  // namespace

std::string model_to_json(const DeepLstmModel& m) {
  ordered_json doc;
  doc["format_version"] = 1;
  doc["n_u"] = m.n_u;
  doc["n_y"] = m.output_size();
  ordered_json layers = ordered_json::array();
  for (const auto& w : m.layers) {
    ordered_json layer;
    layer["n_c"] = w.cell_size();
    for (size_t k = 0; k < 8; ++k) layer[kMatrixKeys[k]] = matrix_to_json(w.*kLayerMatrixMembers[k]);
    for (size_t k = 0; k < 4; ++k) layer[kVectorKeys[k]] = vector_to_json(w.*kLayerVectorMembers[k]);
    layers.push_back(std::move(layer));
  }
  doc["layers"] = std::move(layers);
  doc["U_o"] = matrix_to_json(m.U_o);
  doc["b_o"] = vector_to_json(m.b_o);
  return doc.dump(2) + "\n";
}

namespace {

DeepLstmModel model_from_parsed(const nlohmann::json& doc) {
  if (doc.at("format_version").get<int>() != 1)
    throw std::runtime_error("model: unsupported format_version");
  DeepLstmModel m;
  m.n_u = doc.at("n_u").get<Index>();
  const Index n_y = doc.at("n_y").get<Index>();
  Index in = m.n_u;
  size_t idx = 0;
  for (const auto& layer : doc.at("layers")) {
    const Index n_c = layer.at("n_c").get<Index>();
    const std::string prefix = "layers[" + std::to_string(idx) + "].";
    LayerWeights w;
    for (size_t k = 0; k < 8; ++k) {
      const Index cols = k < 4 ? in : n_c;
      w.*kLayerMatrixMembers[k] =
          matrix_from_json(layer.at(kMatrixKeys[k]), prefix + kMatrixKeys[k], n_c, cols);
    }
    for (size_t k = 0; k < 4; ++k)
      w.*kLayerVectorMembers[k] =
          vector_from_json(layer.at(kVectorKeys[k]), prefix + kVectorKeys[k], n_c);
    m.layers.push_back(std::move(w));
    in = n_c;
    ++idx;
  }
  if (m.layers.empty()) throw std::runtime_error("model: layers array is empty");
  m.U_o = matrix_from_json(doc.at("U_o"), "U_o", n_y, in);
  m.b_o = vector_from_json(doc.at("b_o"), "b_o", n_y);
  m.validate();
  return m;
}

}  // namespace

DeepLstmModel model_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("model: invalid json: ") + e.what());
  }
  try {
    return model_from_parsed(doc);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("model: ") + e.what());
  }
}

void save_model(const DeepLstmModel& m, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_model: cannot write " + path);
  f << model_to_json(m);
}

DeepLstmModel load_model(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_model: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return model_from_json(text);
}

void save_report(const TrainReport& report, const std::string& path) {
  ordered_json doc;
  ordered_json epochs = ordered_json::array();
  for (const auto& e : report.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"val_mse", e.val_mse},
                      {"nu_margin", e.nu_margin}});
  doc["epochs"] = std::move(epochs);
  doc["stopping_epoch"] = report.stopping_epoch;
  doc["best_epoch"] = report.best_epoch;
  doc["best_val_mse"] = report.best_val_mse;
  doc["final_margin"] = report.final_margin;
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_report: cannot write " + path);
  f << doc.dump(2) << "\n";
}

}  // namespace dlstm
