#pragma once

// Plain-text key=value experiment configuration: a config file plus
// command-line overrides, typed getters with documented ranges, unknown-key
// rejection per verb, and a canonical hash recorded in every artifact.

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace carnot {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class ExperimentConfig {
 public:
  ExperimentConfig() = default;

  static ExperimentConfig parse(const std::string& config_path,
                                const std::vector<std::string>& overrides) {
    ExperimentConfig cfg;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw ConfigError("cannot open config file: " + config_path);
      std::string line;
      int lineno = 0;
      while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
          throw ConfigError("config line " + std::to_string(lineno) +
                            ": expected key=value");
        cfg.kv_[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
      }
    }
    for (const std::string& ov : overrides) {
      const auto eq = ov.find('=');
      if (eq == std::string::npos)
        throw ConfigError("override '" + ov + "': expected key=value");
      cfg.kv_[trim(ov.substr(0, eq))] = trim(ov.substr(eq + 1));
    }
    return cfg;
  }

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get_string(const std::string& key,
                         const std::string& fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback, double lo,
                    double hi) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    double v;
    try {
      v = std::stod(it->second);
    } catch (...) {
      throw ConfigError("key '" + key + "': not a number: " + it->second);
    }
    check_range(key, v, lo, hi);
    return v;
  }

  long long get_int(const std::string& key, long long fallback, long long lo,
                    long long hi) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    long long v;
    std::size_t pos = 0;
    try {
      v = std::stoll(it->second, &pos);
    } catch (...) {
      throw ConfigError("key '" + key + "': not an integer: " + it->second);
    }
    if (pos != it->second.size())
      throw ConfigError("key '" + key + "': not an integer: " + it->second);
    check_range(key, (double)v, (double)lo, (double)hi);
    return v;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("key '" + key + "': expected true/false");
  }

  std::vector<double> get_list(const std::string& key,
                               std::vector<double> fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    std::vector<double> out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        out.push_back(std::stod(trim(item)));
      } catch (...) {
        throw ConfigError("key '" + key + "': bad list entry: " + item);
      }
    }
    if (out.empty()) throw ConfigError("key '" + key + "': empty list");
    return out;
  }

  // Rejects keys outside the allowed set.
  void require_known(const std::set<std::string>& allowed) const {
    for (const auto& [k, v] : kv_)
      if (!allowed.count(k)) throw ConfigError("unknown config key: " + k);
  }

  // FNV-1a over the sorted canonical "key=value" lines.
  std::string hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](const std::string& s) {
      for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
      }
    };
    for (const auto& [k, v] : kv_) {  // std::map: sorted
      mix(k);
      mix("=");
      mix(v);
      mix("\n");
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
    return buf;
  }

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
  }
  static void check_range(const std::string& key, double v, double lo,
                          double hi) {
    if (!(v >= lo && v <= hi)) {
      std::ostringstream os;
      os << "key '" << key << "': value " << v << " outside [" << lo << ", "
         << hi << "]";
      throw ConfigError(os.str());
    }
  }

  std::map<std::string, std::string> kv_;
};

}  // namespace carnot
