#include "dlstm/config.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <variant>

namespace dlstm {

namespace {

// Minimal TOML subset: [section] headers, key = value with numbers,
// booleans, quoted strings and flat numeric arrays. Enough for the
// pipeline config; no external TOML package is available in this tree.
struct Entry {
  std::variant<double, bool, std::string, std::vector<double>> value;
  int line = 0;
  bool used = false;
};

using EntryMap = std::map<std::string, Entry>;

[[noreturn]] void fail(const std::string& file, int line, const std::string& msg) {
  throw std::runtime_error(file + ":" + std::to_string(line) + ": " + msg);
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& file, int line, const std::string& text) {
  try {
    size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) fail(file, line, "malformed number '" + text + "'");
    return v;
  } catch (const std::invalid_argument&) {
    fail(file, line, "malformed number '" + text + "'");
  } catch (const std::out_of_range&) {
    fail(file, line, "number out of range '" + text + "'");
  }
}

EntryMap parse_toml(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  EntryMap entries;
  std::string section;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    // Strip comments outside quotes.
    bool in_quote = false;
    for (size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_quote = !in_quote;
      if (line[i] == '#' && !in_quote) {
        line = line.substr(0, i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(path, lineno, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) fail(path, lineno, "empty section name");
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) fail(path, lineno, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string raw = trim(line.substr(eq + 1));
    if (key.empty()) fail(path, lineno, "empty key");
    if (raw.empty()) fail(path, lineno, "missing value for '" + key + "'");
    const std::string full = section.empty() ? key : section + "." + key;
    if (entries.count(full)) fail(path, lineno, "duplicate key '" + full + "'");

    Entry e;
    e.line = lineno;
    if (raw == "true" || raw == "false") {
      e.value = (raw == "true");
    } else if (raw.front() == '"') {
      if (raw.size() < 2 || raw.back() != '"') fail(path, lineno, "unterminated string");
      e.value = raw.substr(1, raw.size() - 2);
    } else if (raw.front() == '[') {
      if (raw.back() != ']') fail(path, lineno, "unterminated array");
      std::vector<double> arr;
      std::stringstream ss(raw.substr(1, raw.size() - 2));
      std::string cell;
      while (std::getline(ss, cell, ',')) {
        cell = trim(cell);
        if (!cell.empty()) arr.push_back(parse_number(path, lineno, cell));
      }
      e.value = std::move(arr);
    } else {
      e.value = parse_number(path, lineno, raw);
    }
    entries.emplace(full, std::move(e));
  }
  return entries;
}

class ConfigReader {
 public:
  ConfigReader(std::string path, EntryMap entries)
      : path_(std::move(path)), entries_(std::move(entries)) {}

  double number(const std::string& key) {
    Entry& e = require(key);
    if (!std::holds_alternative<double>(e.value))
      fail(path_, e.line, "'" + key + "' must be a number");
    return std::get<double>(e.value);
  }

  int integer(const std::string& key) {
    const double v = number(key);
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v) {
      fail(path_, entries_.at(key).line, "'" + key + "' must be an integer");
    }
    return i;
  }

  std::uint64_t unsigned64(const std::string& key) {
    const double v = number(key);
    if (v < 0 || v != std::floor(v))
      fail(path_, entries_.at(key).line, "'" + key + "' must be a nonnegative integer");
    return static_cast<std::uint64_t>(v);
  }

  std::vector<double> array(const std::string& key) {
    Entry& e = require(key);
    if (!std::holds_alternative<std::vector<double>>(e.value))
      fail(path_, e.line, "'" + key + "' must be an array of numbers");
    return std::get<std::vector<double>>(e.value);
  }

  void finish() const {
    for (const auto& [key, e] : entries_)
      if (!e.used) fail(path_, e.line, "unknown key '" + key + "'");
  }

 private:
  Entry& require(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end())
      throw std::runtime_error(path_ + ": missing field '" + key + "'");
    it->second.used = true;
    return it->second;
  }

  std::string path_;
  EntryMap entries_;
};

}  // namespace

DatasetConfig PipelineConfig::dataset_config() const {
  DatasetConfig cfg;
  cfg.n_experiments = n_experiments;
  cfg.prbs.duration_s = duration_s;
  cfg.prbs.fs_hz = fs_hz;
  cfg.prbs.dwell_min_s = dwell_min_s;
  cfg.prbs.dwell_max_s = dwell_max_s;
  cfg.plant.noise_std = noise_std;
  cfg.split.seq_len = train.seq_len;
  cfg.split.n_train = n_train;
  cfg.split.n_val = n_val;
  cfg.split.seed = seed;
  return cfg;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
  ConfigReader reader(path, parse_toml(path));
  PipelineConfig cfg;
  cfg.seed = reader.unsigned64("seed");

  cfg.cells.clear();
  for (double c : reader.array("model.cells")) {
    if (c < 1 || c != std::floor(c))
      throw std::runtime_error(path + ": model.cells entries must be positive integers");
    cfg.cells.push_back(static_cast<Index>(c));
  }
  if (cfg.cells.empty()) throw std::runtime_error(path + ": model.cells must not be empty");

  cfg.n_experiments = reader.integer("data.experiments");
  cfg.duration_s = reader.number("data.duration_s");
  cfg.fs_hz = reader.number("data.fs_hz");
  cfg.dwell_min_s = reader.number("data.dwell_min_s");
  cfg.dwell_max_s = reader.number("data.dwell_max_s");
  cfg.noise_std = reader.number("data.noise_std");
  cfg.n_train = reader.integer("data.n_train");
  cfg.n_val = reader.integer("data.n_val");

  cfg.train.seq_len = reader.integer("train.seq_len");
  cfg.train.washout = reader.integer("train.washout");
  cfg.train.batch_size = reader.integer("train.batch_size");
  cfg.train.learning_rate = reader.number("train.learning_rate");
  cfg.train.rmsprop_decay = reader.number("train.rmsprop_decay");
  cfg.train.rmsprop_epsilon = reader.number("train.rmsprop_epsilon");
  cfg.train.pi_upper = reader.number("train.pi_upper");
  cfg.train.pi_lower = reader.number("train.pi_lower");
  cfg.train.eps_nu = reader.number("train.eps_nu");
  cfg.train.max_epochs = reader.integer("train.max_epochs");
  cfg.train.patience = reader.integer("train.patience");
  cfg.train.threads = reader.integer("train.threads");
  cfg.train.rng_seed = cfg.seed;

  reader.finish();
  cfg.train.validate();
  return cfg;
}

std::string PipelineConfig::default_toml() {
  return R"(# Deep LSTM identification pipeline configuration.
seed = 1

[model]
cells = [8, 8]

[data]
experiments = 6
duration_s = 180.0
fs_hz = 200.0
dwell_min_s = 2.5
dwell_max_s = 4.5
noise_std = 0.0
n_train = 3500
n_val = 1000

[train]
seq_len = 200
washout = 20
batch_size = 50
learning_rate = 0.001
rmsprop_decay = 0.99
rmsprop_epsilon = 1e-8
pi_upper = 2e-4
pi_lower = 1e-6
eps_nu = 0.02
max_epochs = 200
patience = 50
threads = 0
)";
}

}  // namespace dlstm
