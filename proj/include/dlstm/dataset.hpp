#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dlstm/model.hpp"

namespace dlstm {

// One recorded experiment: time stamps, model input (piston position) and
// the two pressure output channels. Values are stored normalized once
// normalize() has run.
struct Experiment {
  Vector t;  // seconds, uniform grid
  Matrix u;  // T x n_u
  Matrix y;  // T x n_y

  Index samples() const { return t.size(); }
};

struct ChannelRange {
  double lo = 0.0;
  double hi = 0.0;
  bool degenerate() const { return hi <= lo; }
};

struct NormalizationInfo {
  std::vector<ChannelRange> input;
  std::vector<ChannelRange> output;
};

// A TBPTT training window: T_s + 1 samples of (u_k, y_k) pairs.
struct Subsequence {
  Matrix u;  // (T_s+1) x n_u
  Matrix y;  // (T_s+1) x n_y
  int experiment = 0;
  int start = 0;
};

// Weighted mixture of uniform intervals; the excitation amplitudes are
// drawn from per-experiment instances of this.
struct UniformPiece {
  double lo = 0.0;
  double hi = 0.0;
  double weight = 1.0;
};

struct PrbsConfig {
  double duration_s = 180.0;
  double fs_hz = 200.0;
  std::vector<UniformPiece> amplitude = {{0.0, 10.0, 1.0}};
  double dwell_min_s = 2.5;
  double dwell_max_s = 4.5;
};

// Multilevel step train: random amplitude held for a random dwell.
Vector gen_prbs(const PrbsConfig& cfg, std::uint64_t seed);

// Synthetic stand-in for the hydraulic brake actuator. Current reference
// drives the piston through a first-order lag; the cylinder pressure is a
// saturated cubic stiffness of the position through another first-order
// lag; the caliper pressure follows through a delayed underdamped
// second-order stage, so it lags and overshoots the cylinder pressure.
struct PlantParams {
  double actuator_tau_s = 0.08;      // current -> position lag
  double actuator_gain_mm_per_a = 2.5;
  double stiffness_lin = 1.6;        // bar / mm
  double stiffness_cub = 0.0004;     // bar / mm^3
  double pressure_max_bar = 50.0;
  double cylinder_tau_s = 0.008;
  double caliper_omega_n = 150.0;    // rad/s
  double caliper_zeta = 0.9;
  int caliper_delay_samples = 3;
  double noise_std = 0.0;            // additive Gaussian on outputs, off by default
};

struct PlantOutput {
  Vector x_p;    // piston position, mm
  Vector p_cyl;  // master cylinder pressure, bar
  Vector p_cal;  // caliper pressure, bar
};

PlantOutput surrogate_plant(const Vector& current_ref, const PlantParams& params, double fs_hz,
                            std::uint64_t noise_seed = 0);

// Closed-form steady state of a held input step (fixed point of the lags).
PlantOutput plant_steady_state(double current, const PlantParams& params);

// Affine per-channel map onto [-1, 1] using the global min/max across all
// experiments, in place. Constant channels map to 0 with the degenerate
// range recorded.
NormalizationInfo normalize(std::vector<Experiment>& experiments);
void denormalize(std::vector<Experiment>& experiments, const NormalizationInfo& info);

struct SplitConfig {
  int seq_len = 200;    // T_s
  int n_train = 3500;
  int n_val = 1000;
  std::uint64_t seed = 1;
};

// Region of one experiment assigned to a split role, [begin, end) samples.
struct SplitRegion {
  int experiment = 0;
  int begin = 0;
  int end = 0;
  std::string role;  // "train" | "val" | "test"
};

struct SplitResult {
  std::vector<Subsequence> train;
  std::vector<Subsequence> val;
  Experiment test;  // contiguous tail of experiment 1, kept whole
  int test_experiment = 0;
  int test_begin = 0;
  std::vector<SplitRegion> regions;
};

// Experiment 1: first 40% validation, last 60% test (kept whole).
// Remaining experiments: first 25% validation, last 75% training.
// Subsequence start offsets are uniform within the assigned region.
SplitResult split_and_extract(const std::vector<Experiment>& experiments,
                              const SplitConfig& cfg);

struct DatasetConfig {
  int n_experiments = 6;
  PrbsConfig prbs;  // amplitude mixture varied per experiment on top of this
  PlantParams plant;
  SplitConfig split;
  // Per-experiment amplitude mixtures; filled with defaults when empty.
  std::vector<std::vector<UniformPiece>> amplitude_mixtures;
};

std::vector<std::vector<UniformPiece>> default_amplitude_mixtures(int n_experiments);

// Full generation pipeline: PRBS excitation -> surrogate plant -> model
// input/output channels (x_p; P_cyl, P_cal), not yet normalized.
std::vector<Experiment> generate_experiments(const DatasetConfig& cfg, std::uint64_t seed);

// Directory layout: expNN.csv (header t,u,y1,y2) plus meta.json with
// normalization ranges, seeds, split regions and subsequence index lists.
void save_dataset(const std::string& dir, const std::vector<Experiment>& experiments,
                  const NormalizationInfo& norm, const SplitResult& split,
                  std::uint64_t seed);

struct LoadedDataset {
  std::vector<Experiment> experiments;  // normalized
  NormalizationInfo norm;
  SplitResult split;
  int seq_len = 0;
};

LoadedDataset load_dataset(const std::string& dir);

}  // namespace dlstm
