#include "dlstm/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "dlstm/rng.hpp"

namespace dlstm {

namespace {

using ordered_json = nlohmann::ordered_json;

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

double sample_mixture(const std::vector<UniformPiece>& pieces, Rng& rng) {
  double total = 0.0;
  for (const auto& p : pieces) total += p.weight;
  double pick = rng.uniform() * total;
  for (const auto& p : pieces) {
    if (pick < p.weight || &p == &pieces.back()) return rng.uniform(p.lo, p.hi);
    pick -= p.weight;
  }
  return pieces.back().lo;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Vector gen_prbs(const PrbsConfig& cfg, std::uint64_t seed) {
  require(cfg.duration_s > 0.0, "gen_prbs: duration must be positive");
  require(cfg.fs_hz > 0.0, "gen_prbs: sampling frequency must be positive");
  require(cfg.dwell_min_s > 0.0 && cfg.dwell_max_s >= cfg.dwell_min_s,
          "gen_prbs: dwell range invalid");
  require(!cfg.amplitude.empty(), "gen_prbs: amplitude mixture is empty");
  for (const auto& p : cfg.amplitude)
    require(p.hi >= p.lo && p.weight > 0.0, "gen_prbs: amplitude piece invalid");

  const Index n = static_cast<Index>(std::llround(cfg.duration_s * cfg.fs_hz));
  Vector out(n);
  Rng rng(seed);
  Index at = 0;
  while (at < n) {
    const double amp = sample_mixture(cfg.amplitude, rng);
    const double dwell = rng.uniform(cfg.dwell_min_s, cfg.dwell_max_s);
    const Index hold = std::max<Index>(1, static_cast<Index>(std::llround(dwell * cfg.fs_hz)));
    const Index end = std::min(n, at + hold);
    out.segment(at, end - at).setConstant(amp);
    at = end;
  }
  return out;
}

PlantOutput surrogate_plant(const Vector& current_ref, const PlantParams& params, double fs_hz,
                            std::uint64_t noise_seed) {
  require(current_ref.allFinite(), "surrogate_plant: input contains non-finite values");
  require(params.caliper_delay_samples >= 3, "surrogate_plant: caliper delay must be >= 3 samples");
  const Index n = current_ref.size();
  const double dt = 1.0 / fs_hz;
  PlantOutput out{Vector::Zero(n), Vector::Zero(n), Vector::Zero(n)};

  double x_p = 0.0, p_cyl = 0.0, p_cal = 0.0, p_cal_vel = 0.0;
  std::vector<double> delay_line(static_cast<size_t>(params.caliper_delay_samples), 0.0);
  size_t delay_at = 0;

  for (Index k = 0; k < n; ++k) {
    x_p += dt / params.actuator_tau_s *
           (params.actuator_gain_mm_per_a * current_ref(k) - x_p);

    const double p_raw = std::clamp(
        params.stiffness_lin * x_p + params.stiffness_cub * x_p * x_p * x_p, 0.0,
        params.pressure_max_bar);
    p_cyl += dt / params.cylinder_tau_s * (p_raw - p_cyl);
    p_cyl = std::max(0.0, p_cyl);

    const double p_delayed = delay_line[delay_at];
    delay_line[delay_at] = p_cyl;
    delay_at = (delay_at + 1) % delay_line.size();

    const double wn = params.caliper_omega_n;
    p_cal_vel += dt * (wn * wn * (p_delayed - p_cal) - 2.0 * params.caliper_zeta * wn * p_cal_vel);
    p_cal += dt * p_cal_vel;
    if (p_cal < 0.0) {
      p_cal = 0.0;
      p_cal_vel = std::max(0.0, p_cal_vel);
    }

    out.x_p(k) = x_p;
    out.p_cyl(k) = p_cyl;
    out.p_cal(k) = p_cal;
  }

  if (params.noise_std > 0.0) {
    Rng rng(noise_seed);
    for (Index k = 0; k < n; ++k) {
      out.p_cyl(k) = std::max(0.0, out.p_cyl(k) + params.noise_std * rng.normal());
      out.p_cal(k) = std::max(0.0, out.p_cal(k) + params.noise_std * rng.normal());
    }
  }
  return out;
}

PlantOutput plant_steady_state(double current, const PlantParams& params) {
  PlantOutput out{Vector(1), Vector(1), Vector(1)};
  const double x = params.actuator_gain_mm_per_a * current;
  const double p = std::clamp(params.stiffness_lin * x + params.stiffness_cub * x * x * x, 0.0,
                              params.pressure_max_bar);
  out.x_p(0) = x;
  out.p_cyl(0) = p;
  out.p_cal(0) = p;  // unity DC gain through the caliper stage
  return out;
}

namespace {

ChannelRange column_range(const std::vector<Experiment>& exps, bool input, Index col) {
  ChannelRange r{std::numeric_limits<double>::infinity(),
                 -std::numeric_limits<double>::infinity()};
  for (const auto& e : exps) {
    const Matrix& m = input ? e.u : e.y;
    r.lo = std::min(r.lo, m.col(col).minCoeff());
    r.hi = std::max(r.hi, m.col(col).maxCoeff());
  }
  return r;
}

void apply_affine(std::vector<Experiment>& exps, bool input, Index col, double scale,
                  double offset) {
  for (auto& e : exps) {
    Matrix& m = input ? e.u : e.y;
    m.col(col) = (m.col(col).array() * scale + offset).matrix();
  }
}

}  // namespace

NormalizationInfo normalize(std::vector<Experiment>& experiments) {
  require(!experiments.empty(), "normalize: no experiments");
  NormalizationInfo info;
  for (int input = 1; input >= 0; --input) {
    const Index cols = input ? experiments[0].u.cols() : experiments[0].y.cols();
    auto& ranges = input ? info.input : info.output;
    for (Index c = 0; c < cols; ++c) {
      const ChannelRange r = column_range(experiments, input, c);
      ranges.push_back(r);
      if (r.degenerate()) {
        apply_affine(experiments, input, c, 0.0, 0.0);  // constant channel -> 0
      } else {
        const double scale = 2.0 / (r.hi - r.lo);
        apply_affine(experiments, input, c, scale, -1.0 - scale * r.lo);
      }
    }
  }
  return info;
}

void denormalize(std::vector<Experiment>& experiments, const NormalizationInfo& info) {
  for (int input = 1; input >= 0; --input) {
    const auto& ranges = input ? info.input : info.output;
    for (Index c = 0; c < static_cast<Index>(ranges.size()); ++c) {
      const ChannelRange& r = ranges[c];
      if (r.degenerate()) continue;
      const double scale = (r.hi - r.lo) / 2.0;
      apply_affine(experiments, input, c, scale, r.lo + scale);
    }
  }
}

SplitResult split_and_extract(const std::vector<Experiment>& experiments,
                              const SplitConfig& cfg) {
  require(experiments.size() >= 2, "split_and_extract: need at least 2 experiments");
  const int win = cfg.seq_len + 1;  // samples per subsequence
  SplitResult out;

  std::vector<SplitRegion> train_regions, val_regions;
  for (int e = 0; e < static_cast<int>(experiments.size()); ++e) {
    const int n = static_cast<int>(experiments[e].samples());
    if (e == 0) {
      const int val_end = static_cast<int>(std::floor(0.4 * n));
      val_regions.push_back({e, 0, val_end, "val"});
      out.regions.push_back(val_regions.back());
      out.regions.push_back({e, val_end, n, "test"});
      out.test_experiment = e;
      out.test_begin = val_end;
      Experiment test;
      test.t = experiments[e].t.segment(val_end, n - val_end);
      test.u = experiments[e].u.middleRows(val_end, n - val_end);
      test.y = experiments[e].y.middleRows(val_end, n - val_end);
      out.test = std::move(test);
    } else {
      const int val_end = static_cast<int>(std::floor(0.25 * n));
      val_regions.push_back({e, 0, val_end, "val"});
      train_regions.push_back({e, val_end, n, "train"});
      out.regions.push_back(val_regions.back());
      out.regions.push_back(train_regions.back());
    }
  }

  auto check_regions = [&](const std::vector<SplitRegion>& regions) {
    for (const auto& r : regions)
      require(r.end - r.begin >= win, "split_and_extract: experiment " +
                                          std::to_string(r.experiment + 1) + " " + r.role +
                                          " region shorter than T_s + 1 samples");
  };
  if (cfg.n_train > 0) check_regions(train_regions);
  if (cfg.n_val > 0) check_regions(val_regions);

  Rng rng(cfg.seed);
  auto draw = [&](const std::vector<SplitRegion>& regions, int count,
                  std::vector<Subsequence>& dst) {
    dst.reserve(count);
    for (int i = 0; i < count; ++i) {
      const SplitRegion& r =
          regions[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(regions.size()) - 1))];
      const int start = static_cast<int>(rng.uniform_int(r.begin, r.end - win));
      Subsequence s;
      s.experiment = r.experiment;
      s.start = start;
      s.u = experiments[r.experiment].u.middleRows(start, win);
      s.y = experiments[r.experiment].y.middleRows(start, win);
      dst.push_back(std::move(s));
    }
  };
  draw(train_regions, cfg.n_train, out.train);
  draw(val_regions, cfg.n_val, out.val);
  return out;
}

std::vector<std::vector<UniformPiece>> default_amplitude_mixtures(int n_experiments) {
  static const std::vector<std::vector<UniformPiece>> base = {
      {{0.0, 10.0, 1.0}},
      {{0.0, 5.0, 0.7}, {5.0, 10.0, 0.3}},
      {{0.0, 5.0, 0.3}, {5.0, 10.0, 0.7}},
      {{0.0, 3.0, 0.5}, {7.0, 10.0, 0.5}},
      {{2.0, 8.0, 1.0}},
      {{0.0, 2.0, 0.25}, {3.0, 7.0, 0.5}, {8.0, 10.0, 0.25}},
  };
  std::vector<std::vector<UniformPiece>> out;
  for (int i = 0; i < n_experiments; ++i) out.push_back(base[i % base.size()]);
  return out;
}

std::vector<Experiment> generate_experiments(const DatasetConfig& cfg, std::uint64_t seed) {
  auto mixtures = cfg.amplitude_mixtures;
  if (mixtures.empty()) mixtures = default_amplitude_mixtures(cfg.n_experiments);
  require(static_cast<int>(mixtures.size()) >= cfg.n_experiments,
          "generate_experiments: fewer amplitude mixtures than experiments");

  Rng master(seed);
  std::vector<Experiment> out;
  out.reserve(cfg.n_experiments);
  for (int e = 0; e < cfg.n_experiments; ++e) {
    const std::uint64_t prbs_seed = master.next_u64();
    const std::uint64_t noise_seed = master.next_u64();
    PrbsConfig prbs = cfg.prbs;
    prbs.amplitude = mixtures[e];
    const Vector current = gen_prbs(prbs, prbs_seed);
    const PlantOutput plant = surrogate_plant(current, cfg.plant, prbs.fs_hz, noise_seed);

    Experiment exp;
    const Index n = current.size();
    exp.t = Vector::LinSpaced(n, 0.0, static_cast<double>(n - 1) / prbs.fs_hz);
    exp.u = plant.x_p;
    exp.y.resize(n, 2);
    exp.y.col(0) = plant.p_cyl;
    exp.y.col(1) = plant.p_cal;
    out.push_back(std::move(exp));
  }
  return out;
}

void save_dataset(const std::string& dir, const std::vector<Experiment>& experiments,
                  const NormalizationInfo& norm, const SplitResult& split,
                  std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  for (size_t e = 0; e < experiments.size(); ++e) {
    char name[32];
    std::snprintf(name, sizeof(name), "exp%02zu.csv", e + 1);
    std::ofstream f(fs::path(dir) / name);
    if (!f) throw std::runtime_error("save_dataset: cannot write " + (fs::path(dir) / name).string());
    f << "t,u,y1,y2\n";
    const auto& exp = experiments[e];
    for (Index k = 0; k < exp.samples(); ++k) {
      f << fmt_double(exp.t(k)) << ',' << fmt_double(exp.u(k, 0)) << ','
        << fmt_double(exp.y(k, 0)) << ',' << fmt_double(exp.y(k, 1)) << '\n';
    }
  }

  ordered_json meta;
  meta["format_version"] = 1;
  meta["seed"] = seed;
  meta["n_experiments"] = experiments.size();
  auto ranges_json = [](const std::vector<ChannelRange>& ranges) {
    ordered_json arr = ordered_json::array();
    for (const auto& r : ranges) arr.push_back({{"lo", r.lo}, {"hi", r.hi}});
    return arr;
  };
  meta["normalization"] = {{"input", ranges_json(norm.input)},
                           {"output", ranges_json(norm.output)}};
  ordered_json regions = ordered_json::array();
  for (const auto& r : split.regions)
    regions.push_back(
        {{"experiment", r.experiment}, {"begin", r.begin}, {"end", r.end}, {"role", r.role}});
  meta["regions"] = regions;
  meta["seq_len"] = split.train.empty() ? 0 : static_cast<int>(split.train[0].u.rows()) - 1;
  auto index_json = [](const std::vector<Subsequence>& seqs) {
    ordered_json arr = ordered_json::array();
    for (const auto& s : seqs) arr.push_back({s.experiment, s.start});
    return arr;
  };
  meta["train_subsequences"] = index_json(split.train);
  meta["val_subsequences"] = index_json(split.val);
  meta["test"] = {{"experiment", split.test_experiment}, {"begin", split.test_begin}};

  std::ofstream mf(fs::path(dir) / "meta.json");
  if (!mf) throw std::runtime_error("save_dataset: cannot write meta.json");
  mf << meta.dump(2) << '\n';
}

namespace {

Experiment load_experiment_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_dataset: cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line) || line.rfind("t,u,", 0) != 0)
    throw std::runtime_error("load_dataset: " + path.string() + " has unexpected header");
  std::vector<std::array<double, 4>> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::array<double, 4> row{};
    std::istringstream ss(line);
    std::string cell;
    for (int c = 0; c < 4; ++c) {
      if (!std::getline(ss, cell, ','))
        throw std::runtime_error("load_dataset: short row in " + path.string());
      row[static_cast<size_t>(c)] = std::stod(cell);
    }
    rows.push_back(row);
  }
  Experiment exp;
  const Index n = static_cast<Index>(rows.size());
  exp.t.resize(n);
  exp.u.resize(n, 1);
  exp.y.resize(n, 2);
  for (Index k = 0; k < n; ++k) {
    exp.t(k) = rows[static_cast<size_t>(k)][0];
    exp.u(k, 0) = rows[static_cast<size_t>(k)][1];
    exp.y(k, 0) = rows[static_cast<size_t>(k)][2];
    exp.y(k, 1) = rows[static_cast<size_t>(k)][3];
  }
  return exp;
}

}  // namespace

LoadedDataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream mf(fs::path(dir) / "meta.json");
  if (!mf) throw std::runtime_error("load_dataset: cannot open " + dir + "/meta.json");
  const auto meta = nlohmann::json::parse(mf);

  LoadedDataset out;
  const size_t n_exp = meta.at("n_experiments").get<size_t>();
  for (size_t e = 0; e < n_exp; ++e) {
    char name[32];
    std::snprintf(name, sizeof(name), "exp%02zu.csv", e + 1);
    out.experiments.push_back(load_experiment_csv(fs::path(dir) / name));
  }

  for (const auto& r : meta.at("normalization").at("input"))
    out.norm.input.push_back({r.at("lo").get<double>(), r.at("hi").get<double>()});
  for (const auto& r : meta.at("normalization").at("output"))
    out.norm.output.push_back({r.at("lo").get<double>(), r.at("hi").get<double>()});

  out.seq_len = meta.at("seq_len").get<int>();
  const int win = out.seq_len + 1;
  auto read_seqs = [&](const char* key, std::vector<Subsequence>& dst) {
    for (const auto& item : meta.at(key)) {
      Subsequence s;
      s.experiment = item.at(0).get<int>();
      s.start = item.at(1).get<int>();
      s.u = out.experiments[static_cast<size_t>(s.experiment)].u.middleRows(s.start, win);
      s.y = out.experiments[static_cast<size_t>(s.experiment)].y.middleRows(s.start, win);
      dst.push_back(std::move(s));
    }
  };
  read_seqs("train_subsequences", out.split.train);
  read_seqs("val_subsequences", out.split.val);

  for (const auto& r : meta.at("regions"))
    out.split.regions.push_back({r.at("experiment").get<int>(), r.at("begin").get<int>(),
                                 r.at("end").get<int>(), r.at("role").get<std::string>()});

  out.split.test_experiment = meta.at("test").at("experiment").get<int>();
  out.split.test_begin = meta.at("test").at("begin").get<int>();
  const auto& te = out.experiments[static_cast<size_t>(out.split.test_experiment)];
  const Index begin = out.split.test_begin;
  const Index len = te.samples() - begin;
  out.split.test.t = te.t.segment(begin, len);
  out.split.test.u = te.u.middleRows(begin, len);
  out.split.test.y = te.y.middleRows(begin, len);
  return out;
}

}  // namespace dlstm
