// Command-line front end for the deep LSTM identification pipeline:
// data generation, training, stability certification, evaluation and
// open-loop simulation.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "dlstm/certifier.hpp"
#include "dlstm/config.hpp"
#include "dlstm/dataset.hpp"
#include "dlstm/evaluation.hpp"
#include "dlstm/model_io.hpp"
#include "dlstm/trainer.hpp"

namespace {

using namespace dlstm;
using ordered_json = nlohmann::ordered_json;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed_override) {
  PipelineConfig cfg = PipelineConfig::load(config_path);
  if (seed_override) cfg.seed = *seed_override;
  DatasetConfig dcfg = cfg.dataset_config();
  dcfg.split.seed = cfg.seed;

  auto experiments = generate_experiments(dcfg, cfg.seed);
  const NormalizationInfo norm = normalize(experiments);
  const SplitResult split = split_and_extract(experiments, dcfg.split);
  save_dataset(out_dir, experiments, norm, split, cfg.seed);

  std::cout << "wrote " << experiments.size() << " experiments ("
            << experiments[0].samples() << " samples each), " << split.train.size()
            << " training and " << split.val.size() << " validation subsequences to " << out_dir
            << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& model_out, const std::string& report_out,
              std::optional<std::uint64_t> seed_override) {
  PipelineConfig cfg = PipelineConfig::load(config_path);
  if (seed_override) {
    cfg.seed = *seed_override;
    cfg.train.rng_seed = *seed_override;
  }
  const LoadedDataset data = load_dataset(data_dir);
  if (data.seq_len != cfg.train.seq_len)
    throw std::runtime_error("train: dataset subsequence length " +
                             std::to_string(data.seq_len) + " does not match config seq_len " +
                             std::to_string(cfg.train.seq_len));

  const Index n_u = data.split.train.at(0).u.cols();
  const Index n_y = data.split.train.at(0).y.cols();
  // Small init scale so training starts inside the certified region; the
  // stability penalty then only has to keep it there.
  const DeepLstmModel init = random_model(n_u, n_y, cfg.cells, cfg.seed, 0.2);

  auto [model, report] = train(init, data.split.train, data.split.val, cfg.train);
  save_model(model, model_out);
  save_report(report, report_out);

  std::cout << "trained " << report.stopping_epoch << " epochs; best validation MSE "
            << fmt(report.best_val_mse) << " at epoch " << report.best_epoch << "; margin "
            << fmt(report.final_margin) << "\n";
  return 0;
}

int cmd_certify(const std::string& model_path, bool as_json) {
  const DeepLstmModel model = load_model(model_path);
  const StabilityCertificate cert = certify(model);

  if (as_json) {
    ordered_json doc;
    ordered_json layers = ordered_json::array();
    for (const auto& b : cert.per_layer)
      layers.push_back({{"sigma_f_bar", b.sigma_f_bar},
                        {"sigma_i_bar", b.sigma_i_bar},
                        {"sigma_z_bar", b.sigma_z_bar},
                        {"phi_r_bar", b.phi_r_bar},
                        {"c_bar", b.c_bar},
                        {"h_bar", b.h_bar},
                        {"alpha_bar", b.alpha_bar}});
    doc["per_layer"] = std::move(layers);
    doc["nu"] = std::vector<double>(cert.nu.data(), cert.nu.data() + cert.nu.size());
    doc["margin"] = cert.margin;
    doc["schur_radius"] = cert.schur_radius;
    doc["satisfied"] = cert.satisfied;
    if (cert.satisfied) doc["iss_gain"] = cert.iss_gain;
    std::cout << doc.dump(2) << "\n";
  } else {
    for (size_t l = 0; l < cert.per_layer.size(); ++l) {
      const auto& b = cert.per_layer[l];
      std::cout << "layer " << l + 1 << ": sigma_f=" << b.sigma_f_bar
                << " sigma_i=" << b.sigma_i_bar << " sigma_z=" << b.sigma_z_bar
                << " phi_r=" << b.phi_r_bar << " c_bar=" << b.c_bar << " h_bar=" << b.h_bar
                << " alpha_bar=" << b.alpha_bar << "\n";
    }
    std::cout << "nu = [" << cert.nu.transpose() << "]\n";
    std::cout << "margin = " << fmt(cert.margin) << "\n";
    std::cout << "schur radius = " << fmt(cert.schur_radius) << "\n";
    if (cert.satisfied)
      std::cout << "ISS gain = " << fmt(cert.iss_gain) << "\nstability: CERTIFIED\n";
    else
      std::cout << "stability: NOT certified\n";
  }
  return cert.satisfied ? 0 : 1;
}

int cmd_evaluate(const std::string& model_path, const std::string& data_dir,
                 const std::string& out_path, const std::string& traces_path, int washout) {
  const DeepLstmModel model = load_model(model_path);
  const LoadedDataset data = load_dataset(data_dir);
  const EvalResult res = evaluate(model, data.split.test, washout);

  ordered_json doc;
  doc["fit_percent"] = res.fit_percent;
  doc["per_channel_fit"] = res.per_channel_fit;
  doc["test_mse"] = res.test_mse;
  doc["washout"] = res.washout;
  doc["certified"] = res.certified;
  std::ofstream f(out_path);
  if (!f) throw std::runtime_error("evaluate: cannot write " + out_path);
  f << doc.dump(2) << "\n";

  if (!traces_path.empty()) {
    std::ofstream tf(traces_path);
    if (!tf) throw std::runtime_error("evaluate: cannot write " + traces_path);
    tf << "t";
    for (Index c = 0; c < res.y_true.cols(); ++c)
      tf << ",y" << c + 1 << "_true,y" << c + 1 << "_pred";
    tf << "\n";
    for (Index k = 0; k < res.t.size(); ++k) {
      tf << fmt(res.t(k));
      for (Index c = 0; c < res.y_true.cols(); ++c)
        tf << ',' << fmt(res.y_true(k, c)) << ',' << fmt(res.y_pred(k, c));
      tf << "\n";
    }
  }

  std::cout << "FIT = " << fmt(res.fit_percent) << " %";
  for (size_t c = 0; c < res.per_channel_fit.size(); ++c)
    std::cout << "  (y" << c + 1 << ": " << fmt(res.per_channel_fit[c]) << " %)";
  std::cout << "\ntest MSE = " << fmt(res.test_mse) << "\n";
  return 0;
}

int cmd_simulate(const std::string& model_path, const std::string& input_path,
                 const std::string& output_path) {
  const DeepLstmModel model = load_model(model_path);

  std::ifstream f(input_path);
  if (!f) throw std::runtime_error("simulate: cannot open " + input_path);
  std::string header;
  if (!std::getline(f, header)) throw std::runtime_error("simulate: empty input file");
  std::vector<std::string> cols;
  {
    std::stringstream ss(header);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
  }
  const bool has_time = !cols.empty() && cols[0] == "t";
  const Index n_in = static_cast<Index>(cols.size()) - (has_time ? 1 : 0);
  if (n_in != model.n_u)
    throw std::runtime_error("simulate: input file has " + std::to_string(n_in) +
                             " input columns, model expects " + std::to_string(model.n_u));

  std::vector<double> times;
  std::vector<Vector> inputs;
  std::string line;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    if (has_time) {
      if (!std::getline(ss, cell, ','))
        throw std::runtime_error("simulate: short row at line " + std::to_string(lineno));
      times.push_back(std::stod(cell));
    }
    Vector u(n_in);
    for (Index c = 0; c < n_in; ++c) {
      if (!std::getline(ss, cell, ','))
        throw std::runtime_error("simulate: short row at line " + std::to_string(lineno));
      u(c) = std::stod(cell);
    }
    inputs.push_back(std::move(u));
  }

  const Trajectory traj = simulate(model, ModelState::zero(model), inputs);
  std::ofstream out(output_path);
  if (!out) throw std::runtime_error("simulate: cannot write " + output_path);
  out << "t";
  for (Index c = 0; c < model.output_size(); ++c) out << ",y" << c + 1;
  out << "\n";
  for (size_t k = 0; k < traj.outputs.size(); ++k) {
    out << fmt(has_time ? times[k] : static_cast<double>(k));
    for (Index c = 0; c < model.output_size(); ++c) out << ',' << fmt(traj.outputs[k](c));
    out << "\n";
  }
  std::cout << "simulated " << traj.outputs.size() << " steps\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stability-certified deep LSTM system identification"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed_override;
  app.add_option("--seed", seed_override, "Override the config seed");
  bool as_json = false;
  app.add_flag("--json", as_json, "Machine-readable output where supported");

  std::string config_path, data_dir, out_path, model_path, report_path, traces_path, input_path;
  int washout = 20;

  auto* gen = app.add_subcommand("gen-data", "Generate a surrogate experiment dataset");
  gen->add_option("--config", config_path, "Pipeline config (TOML)")->required();
  gen->add_option("--out", out_path, "Output dataset directory")->required();

  auto* tr = app.add_subcommand("train", "Train a stability-regularized deep LSTM");
  tr->add_option("--config", config_path, "Pipeline config (TOML)")->required();
  tr->add_option("--data", data_dir, "Dataset directory")->required();
  tr->add_option("--out", model_path, "Output model JSON")->required();
  tr->add_option("--report", report_path, "Output training report JSON")->required();

  auto* ce = app.add_subcommand("certify", "Check the stability conditions of a model");
  ce->add_option("model", model_path, "Model JSON")->required();

  auto* ev = app.add_subcommand("evaluate", "Open-loop evaluation on the test sequence");
  ev->add_option("--model", model_path, "Model JSON")->required();
  ev->add_option("--data", data_dir, "Dataset directory")->required();
  ev->add_option("--out", out_path, "Output evaluation JSON")->required();
  ev->add_option("--traces", traces_path, "Output traces CSV");
  ev->add_option("--washout", washout, "Washout steps excluded from the metrics");

  auto* si = app.add_subcommand("simulate", "Run a model on a CSV input file");
  si->add_option("--model", model_path, "Model JSON")->required();
  si->add_option("--input", input_path, "Input CSV (t,u... or u...)")->required();
  si->add_option("--output", out_path, "Output CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(config_path, out_path, seed_override);
    if (tr->parsed()) return cmd_train(config_path, data_dir, model_path, report_path, seed_override);
    if (ce->parsed()) return cmd_certify(model_path, as_json);
    if (ev->parsed()) return cmd_evaluate(model_path, data_dir, out_path, traces_path, washout);
    if (si->parsed()) return cmd_simulate(model_path, input_path, out_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
