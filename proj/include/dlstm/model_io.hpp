#pragma once

#include <string>

#include "dlstm/model.hpp"
#include "dlstm/trainer.hpp"

namespace dlstm {

// JSON persistence: {format_version, n_u, n_y, layers:[{n_c, W_f..b_r}],
// U_o, b_o} with row-major nested arrays at full round-trip precision.
// Loading validates dimensions and rejects inconsistent files with a
// message naming the offending field.
void save_model(const DeepLstmModel& m, const std::string& path);
DeepLstmModel load_model(const std::string& path);

std::string model_to_json(const DeepLstmModel& m);
DeepLstmModel model_from_json(const std::string& text);

void save_report(const TrainReport& report, const std::string& path);

}  // namespace dlstm
