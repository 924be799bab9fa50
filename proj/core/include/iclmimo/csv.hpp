// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace iclmimo {

// One emitted measurement. The scenario string tags method and hardware
// case, e.g. "icl_case1" or "ls_balanced".
struct ResultRow {
  std::string experiment;
  std::string scenario;
  double snr_db = 0.0;
  std::size_t pilot_len = 0;
  std::uint64_t seed = 0;
  std::string metric;  // mse | psnr | loss
  double value = 0.0;
};

// Header `experiment,scenario,snr_db,pilot_len,seed,metric,value`, LF line
// endings, floats at full round-trip precision. Non-finite values are
// rejected.
std::string csv_to_string(const std::vector<ResultRow>& rows);
void write_csv(const std::string& path, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_csv(const std::string& path);

// Gnuplot-friendly rendering: one block per (experiment, scenario, metric)
// group with `x value` columns (x is snr_db, or pilot_len for the pilot
// sweep), blocks separated by blank lines.
std::string plot_columns(const std::vector<ResultRow>& rows);

}  // namespace iclmimo
