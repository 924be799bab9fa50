// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace iclmimo {

// Flat key=value configuration: UTF-8 lines, `#` starts a comment, arrays
// are comma-separated. Unknown or malformed lines are errors at parse or
// validation time, never silently ignored.
class ConfigMap {
 public:
  bool has(const std::string& key) const;

  std::string get_str(const std::string& key, const std::string& fallback) const;
  std::string require_str(const std::string& key) const;
  double get_f64(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_f64_list(const std::string& key,
                                   const std::vector<double>& fallback) const;
  std::vector<std::uint64_t> get_u64_list(const std::string& key,
                                          const std::vector<std::uint64_t>& fallback) const;

  // Rejects any key outside `known` (typo guard for experiment configs).
  void require_known(const std::set<std::string>& known) const;

  void set(const std::string& key, const std::string& value);

 private:
  std::string lookup(const std::string& key) const;  // throws when absent
  std::map<std::string, std::string> kv_;
};

ConfigMap parse_config_text(const std::string& text);
ConfigMap parse_config_file(const std::string& path);

}  // namespace iclmimo
