#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cpfs {

inline constexpr const char* kToolVersion = "cpfs 1.0.0";

// Key=value configuration file with '#' comments. Values loaded here are
// defaults; command-line flags override them.
struct RunConfig {
  std::map<std::string, std::string> values;

  static const std::vector<std::string>& known_keys() {
    static const std::vector<std::string> keys = {
        "seed",    "trials", "out",       "level", "jobs",
        "horizon", "lambda", "offspring", "fitness", "max_gen",
        "max_vertices", "max_events", "cap", "f", "k", "r", "eps",
        "theta",   "t0",     "h_grid",    "quantity"};
    return keys;
  }

  bool has(const std::string& key) const { return values.count(key) > 0; }

  std::string get(const std::string& key, const std::string& fallback = "") const {
    auto it = values.find(key);
    return it == values.end() ? fallback : it->second;
  }

  std::string echo() const {
    std::string out;
    for (auto& [k, v] : values) {
      if (!out.empty()) out += " ";
      out += k + "=" + v;
    }
    return out;
  }
};

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    size_t a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    size_t b = line.find_last_not_of(" \t\r");
    std::string body = line.substr(a, b - a + 1);
    size_t eq = body.find('=');
    if (eq == std::string::npos || eq == 0)
      throw std::invalid_argument("config: malformed line " + std::to_string(lineno) +
                                  ": '" + body + "'");
    std::string key = body.substr(0, eq);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    std::string val = body.substr(eq + 1);
    size_t va = val.find_first_not_of(" \t");
    val = va == std::string::npos ? "" : val.substr(va);
    bool known = false;
    for (auto& k : RunConfig::known_keys()) known |= k == key;
    if (!known) {
      std::string list;
      for (auto& k : RunConfig::known_keys()) list += (list.empty() ? "" : ", ") + k;
      throw std::invalid_argument("config: unknown key '" + key + "' at line " +
                                  std::to_string(lineno) + "; valid keys: " + list);
    }
    cfg.values[key] = val;
  }
  return cfg;
}

// --- CSV helpers -------------------------------------------------------------

inline std::string csv_double(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    out += c;
  }
  out += "\"";
  return out;
}

// Every output file starts with these comment lines: tool version, the full
// effective configuration, and the master seed.
inline std::string csv_preamble(const std::string& effective_config, uint64_t seed) {
  std::string out;
  out += std::string("# ") + kToolVersion + "\n";
  out += "# config: " + effective_config + "\n";
  out += "# seed: " + std::to_string(seed) + "\n";
  return out;
}

struct ExperimentRow {
  std::string experiment;
  std::string param_json;
  double estimate = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  uint64_t n = 0;
  uint64_t censored = 0;
  double bound_value = std::numeric_limits<double>::quiet_NaN();
  bool bound_vacuous = false;
  uint64_t seed = 0;
};

inline std::string experiment_csv_header() {
  return "experiment,param_json,estimate,ci_lo,ci_hi,n,censored,bound_value,"
         "bound_vacuous,seed\n";
}

inline std::string to_csv(const ExperimentRow& r) {
  std::ostringstream out;
  out << r.experiment << "," << csv_quote(r.param_json) << ","
      << csv_double(r.estimate) << "," << csv_double(r.ci_lo) << ","
      << csv_double(r.ci_hi) << "," << r.n << "," << r.censored << ","
      << csv_double(r.bound_value) << "," << (r.bound_vacuous ? 1 : 0) << ","
      << r.seed << "\n";
  return out.str();
}

}  // namespace cpfs
