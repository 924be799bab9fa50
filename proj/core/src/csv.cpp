// SPDX-License-Identifier: Apache-2.0
#include "iclmimo/csv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "iclmimo/errors.hpp"

namespace iclmimo {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) parts.push_back(cur);
  return parts;
}

}  // namespace

std::string csv_to_string(const std::vector<ResultRow>& rows) {
  std::string out = "experiment,scenario,snr_db,pilot_len,seed,metric,value\n";
  for (const ResultRow& r : rows) {
    if (!std::isfinite(r.value))
      throw NumericError("csv: non-finite value for " + r.experiment + "/" + r.scenario + "/" +
                         r.metric);
    out += r.experiment + "," + r.scenario + "," + fmt_double(r.snr_db) + "," +
           std::to_string(r.pilot_len) + "," + std::to_string(r.seed) + "," + r.metric + "," +
           fmt_double(r.value) + "\n";
  }
  return out;
}

void write_csv(const std::string& path, const std::vector<ResultRow>& rows) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);  // binary keeps LF endings
  if (!os) throw ConfigError("csv: cannot open " + path + " for writing");
  const std::string s = csv_to_string(rows);
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
  if (!os) throw ConfigError("csv: write failed for " + path);
}

std::vector<ResultRow> read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("csv: cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("csv: empty file " + path);
  if (line.size() && line.back() == '\r') line.pop_back();
  if (line != "experiment,scenario,snr_db,pilot_len,seed,metric,value")
    throw ConfigError("csv: unexpected header in " + path);
  std::vector<ResultRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.size() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> p = split_line(line);
    if (p.size() != 7)
      throw ConfigError("csv: line " + std::to_string(lineno) + " has " +
                        std::to_string(p.size()) + " fields, want 7");
    ResultRow r;
    r.experiment = p[0];
    r.scenario = p[1];
    r.snr_db = std::stod(p[2]);
    r.pilot_len = static_cast<std::size_t>(std::stoull(p[3]));
    r.seed = std::stoull(p[4]);
    r.metric = p[5];
    r.value = std::stod(p[6]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string plot_columns(const std::vector<ResultRow>& rows) {
  // Preserve first-appearance order of groups so output tracks the CSV.
  std::vector<std::string> order;
  std::map<std::string, std::vector<const ResultRow*>> groups;
  for (const ResultRow& r : rows) {
    const std::string key = r.experiment + " " + r.scenario + " " + r.metric;
    if (groups.find(key) == groups.end()) order.push_back(key);
    groups[key].push_back(&r);
  }
  std::string out;
  for (const std::string& key : order) {
    out += "# " + key + "\n";
    const bool by_pilots = key.rfind("mse_vs_pilots", 0) == 0 || key.rfind("e2e", 0) == 0;
    for (const ResultRow* r : groups[key]) {
      const double x = by_pilots ? static_cast<double>(r->pilot_len) : r->snr_db;
      out += fmt_double(x) + " " + fmt_double(r->value) + "\n";
    }
    out += "\n";
  }
  return out;
}

}  // namespace iclmimo
