#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>

#include "dlstm/config.hpp"
#include "dlstm/model_io.hpp"
#include "helpers.hpp"

using namespace dlstm;
using test_helpers::random_certified_model;

namespace {

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

}  // namespace

TEST_CASE("model json round trip is exact") {
  const DeepLstmModel m = random_model(2, 2, {3, 5}, 7, 0.9);
  const DeepLstmModel back = model_from_json(model_to_json(m));
  CHECK(back.n_u == 2);
  REQUIRE(back.layers.size() == 2);
  for (size_t l = 0; l < 2; ++l) {
    for (auto member : kLayerMatrixMembers)
      CHECK(back.layers[l].*member == m.layers[l].*member);
    for (auto member : kLayerVectorMembers)
      CHECK(back.layers[l].*member == m.layers[l].*member);
  }
  CHECK(back.U_o == m.U_o);
  CHECK(back.b_o == m.b_o);
}

TEST_CASE("serialization is byte stable across a round trip") {
  const DeepLstmModel m = random_model(1, 2, {4}, 11, 0.8);
  const std::string once = model_to_json(m);
  CHECK(model_to_json(model_from_json(once)) == once);
}

TEST_CASE("model file save and load") {
  const DeepLstmModel m = random_certified_model(1, 2, {3, 3}, 13, -0.01);
  const auto path = temp_file("dlstm_model_test.json");
  save_model(m, path.string());
  const DeepLstmModel back = load_model(path.string());
  CHECK(back.layers[1].U_z == m.layers[1].U_z);
  CHECK(back.b_o == m.b_o);
  std::filesystem::remove(path);
}

TEST_CASE("loading rejects a dimension-inconsistent file") {
  DeepLstmModel m = random_model(1, 1, {3}, 17);
  auto doc = nlohmann::json::parse(model_to_json(m));
  doc["layers"][0]["W_f"].erase(0);  // drop one row of the 3x1 matrix
  CHECK_THROWS_WITH_AS(model_from_json(doc.dump()), doctest::Contains("W_f"), std::runtime_error);
}

TEST_CASE("loading rejects malformed json") {
  CHECK_THROWS_AS(model_from_json("{not json"), std::runtime_error);
}

TEST_CASE("load_model reports a missing file") {
  CHECK_THROWS_WITH_AS(load_model("/nonexistent/m.json"), doctest::Contains("/nonexistent/m.json"),
                       std::runtime_error);
}

TEST_CASE("report files contain every epoch") {
  TrainReport rep;
  rep.epochs = {{1, 0.5, 0.4, -0.1}, {2, 0.3, 0.2, -0.2}};
  rep.stopping_epoch = 2;
  rep.best_epoch = 2;
  rep.best_val_mse = 0.2;
  rep.final_margin = -0.2;
  const auto path = temp_file("dlstm_report_test.json");
  save_report(rep, path.string());
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text.find("\"best_epoch\": 2") != std::string::npos);
  CHECK(text.find("0.4") != std::string::npos);
  std::filesystem::remove(path);
}

TEST_CASE("the default config text parses to the default config") {
  const auto path = temp_file("dlstm_cfg_default.toml");
  write_file(path, PipelineConfig::default_toml());
  const PipelineConfig cfg = PipelineConfig::load(path.string());
  CHECK(cfg.seed == PipelineConfig{}.seed);
  CHECK(cfg.cells == std::vector<Index>{8, 8});
  CHECK(cfg.n_experiments == 6);
  CHECK(cfg.duration_s == 180.0);
  CHECK(cfg.train.batch_size == 50);
  CHECK(cfg.train.learning_rate == 1e-3);
  CHECK(cfg.train.max_epochs == TrainConfig{}.max_epochs);
  std::filesystem::remove(path);
}

TEST_CASE("a missing field is named") {
  std::string text = PipelineConfig::default_toml();
  const auto pos = text.find("batch_size");
  REQUIRE(pos != std::string::npos);
  const auto eol = text.find('\n', pos);
  text.erase(pos, eol - pos + 1);
  const auto path = temp_file("dlstm_cfg_missing.toml");
  write_file(path, text);
  CHECK_THROWS_WITH_AS(PipelineConfig::load(path.string()), doctest::Contains("batch_size"),
                       std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("an unknown key is rejected with its line") {
  std::string text = PipelineConfig::default_toml();
  text += "\nmystery_knob = 3\n";
  const auto path = temp_file("dlstm_cfg_unknown.toml");
  write_file(path, text);
  CHECK_THROWS_WITH_AS(PipelineConfig::load(path.string()), doctest::Contains("mystery_knob"),
                       std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("a type mismatch is rejected") {
  std::string text = PipelineConfig::default_toml();
  const auto pos = text.find("max_epochs");
  REQUIRE(pos != std::string::npos);
  const auto eol = text.find('\n', pos);
  text.replace(pos, eol - pos, "max_epochs = \"lots\"");
  const auto path = temp_file("dlstm_cfg_type.toml");
  write_file(path, text);
  CHECK_THROWS_WITH_AS(PipelineConfig::load(path.string()), doctest::Contains("max_epochs"),
                       std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("config load reports a missing file") {
  CHECK_THROWS_AS(PipelineConfig::load("/nonexistent/cfg.toml"), std::runtime_error);
}
