// SPDX-License-Identifier: Apache-2.0
#include "iclmimo/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "iclmimo/errors.hpp"

namespace iclmimo {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, ',')) parts.push_back(trim(cur));
  if (!s.empty() && s.back() == ',') parts.push_back("");
  return parts;
}

double parse_f64(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size())
    throw ConfigError("config: key '" + key + "' has non-numeric value '" + v + "'");
  return x;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size() || v[0] == '-')
    throw ConfigError("config: key '" + key + "' has non-integer value '" + v + "'");
  return static_cast<std::uint64_t>(x);
}

}  // namespace

bool ConfigMap::has(const std::string& key) const { return kv_.count(key) != 0; }

std::string ConfigMap::lookup(const std::string& key) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) throw ConfigError("config: missing required key '" + key + "'");
  return it->second;
}

std::string ConfigMap::get_str(const std::string& key, const std::string& fallback) const {
  return has(key) ? kv_.at(key) : fallback;
}

std::string ConfigMap::require_str(const std::string& key) const { return lookup(key); }

double ConfigMap::get_f64(const std::string& key, double fallback) const {
  return has(key) ? parse_f64(key, kv_.at(key)) : fallback;
}

std::uint64_t ConfigMap::get_u64(const std::string& key, std::uint64_t fallback) const {
  return has(key) ? parse_u64(key, kv_.at(key)) : fallback;
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = kv_.at(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: key '" + key + "' must be true/false, got '" + v + "'");
}

std::vector<double> ConfigMap::get_f64_list(const std::string& key,
                                            const std::vector<double>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<double> out;
  for (const std::string& p : split_commas(kv_.at(key))) out.push_back(parse_f64(key, p));
  if (out.empty()) throw ConfigError("config: key '" + key + "' has an empty list");
  return out;
}

std::vector<std::uint64_t> ConfigMap::get_u64_list(
    const std::string& key, const std::vector<std::uint64_t>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<std::uint64_t> out;
  for (const std::string& p : split_commas(kv_.at(key))) out.push_back(parse_u64(key, p));
  if (out.empty()) throw ConfigError("config: key '" + key + "' has an empty list");
  return out;
}

void ConfigMap::require_known(const std::set<std::string>& known) const {
  for (const auto& [k, v] : kv_)
    if (known.count(k) == 0) throw ConfigError("config: unknown key '" + k + "'");
}

void ConfigMap::set(const std::string& key, const std::string& value) { kv_[key] = value; }

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap cfg;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " has no '='");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config: line " + std::to_string(lineno) + " has no key");
    if (cfg.has(key))
      throw ConfigError("config: duplicate key '" + key + "' at line " + std::to_string(lineno));
    cfg.set(key, value);
  }
  return cfg;
}

ConfigMap parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str());
}

}  // namespace iclmimo
