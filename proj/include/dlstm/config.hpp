#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dlstm/dataset.hpp"
#include "dlstm/trainer.hpp"

namespace dlstm {

// Pipeline configuration, loaded from a flat TOML file ([section] headers,
// key = value pairs, numeric arrays). Every known key must be present;
// unknown keys, type mismatches and missing fields are reported with the
// file line.
struct PipelineConfig {
  std::uint64_t seed = 1;

  // [model]
  std::vector<Index> cells = {8, 8};

  // [data]
  int n_experiments = 6;
  double duration_s = 180.0;
  double fs_hz = 200.0;
  double dwell_min_s = 2.5;
  double dwell_max_s = 4.5;
  double noise_std = 0.0;
  int n_train = 3500;
  int n_val = 1000;

  // [train]
  TrainConfig train;

  DatasetConfig dataset_config() const;

  static PipelineConfig load(const std::string& path);
  static std::string default_toml();
};

}  // namespace dlstm
