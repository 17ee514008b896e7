#pragma once

// Flat "key = value" configuration files.
//
//   # comment
//   include = common.cfg      (path relative to the including file)
//   L = 36
//
// Later assignments override earlier ones, including those pulled in by an
// include, so a file can include a base and then adjust it.

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sphcam/core.hpp"

namespace sphcam {

class Config {
 public:
  Config() = default;

  static Config load(const std::string& path) {
    Config c;
    std::vector<std::string> stack;
    c.load_into(std::filesystem::path(path), stack);
    return c;
  }

  static Config parse(std::istream& is, const std::string& base_dir = ".") {
    Config c;
    std::vector<std::string> stack;
    c.parse_into(is, std::filesystem::path(base_dir), "<stream>", stack);
    return c;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  void set(const std::string& key, const std::string& value) {
    if (key.empty()) throw Error(ErrorCategory::config, "empty configuration key");
    values_[key] = value;
  }

  /// Applies "key=value".
  void set_assignment(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorCategory::config, "expected key=value, got '" + kv + "'");
    set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }

  const std::string& get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw Error(ErrorCategory::config, "missing configuration key '" + key + "'");
    return it->second;
  }

  std::string get(const std::string& key, const std::string& fallback) const {
    return has(key) ? get(key) : fallback;
  }

  double get_double(const std::string& key) const { return to_double(key, get(key)); }
  double get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }

  long long get_int(const std::string& key) const {
    const auto& v = get(key);
    std::size_t used = 0;
    long long out = 0;
    try {
      out = std::stoll(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != v.size())
      throw Error(ErrorCategory::config, "key '" + key + "' expects an integer, got '" + v + "'");
    return out;
  }
  long long get_int(const std::string& key, long long fallback) const {
    return has(key) ? get_int(key) : fallback;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& v = get(key);
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw Error(ErrorCategory::config, "key '" + key + "' expects a boolean, got '" + v + "'");
  }

  /// Comma-separated list of numbers.
  std::vector<double> get_list(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(get(key));
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(to_double(key, trim(tok)));
    return out;
  }

  std::vector<std::string> get_strings(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(get(key));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      tok = trim(tok);
      if (!tok.empty()) out.push_back(tok);
    }
    return out;
  }

  /// Rejects keys outside `known`.
  void check_keys(const std::set<std::string>& known) const {
    for (const auto& [k, v] : values_)
      if (!known.count(k)) throw Error(ErrorCategory::config, "unknown configuration key '" + k + "'");
  }

  const std::map<std::string, std::string>& values() const { return values_; }

  /// Canonical text: sorted "key=value" lines.
  std::string canonical() const {
    std::string s;
    for (const auto& [k, v] : values_) s += k + "=" + v + "\n";
    return s;
  }

  std::string hash() const { return hex64(fnv1a64(canonical())); }

 private:
  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  static double to_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double out = 0.0;
    try {
      out = std::stod(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != v.size())
      throw Error(ErrorCategory::config, "key '" + key + "' expects a number, got '" + v + "'");
    return out;
  }

  void load_into(const std::filesystem::path& path, std::vector<std::string>& stack) {
    const auto canon = std::filesystem::weakly_canonical(path).string();
    for (const auto& s : stack)
      if (s == canon) throw Error(ErrorCategory::config, "include cycle through " + path.string());
    std::ifstream is(path);
    if (!is) throw Error(ErrorCategory::io, "cannot read config " + path.string());
    stack.push_back(canon);
    parse_into(is, path.parent_path(), path.string(), stack);
    stack.pop_back();
  }

  void parse_into(std::istream& is, const std::filesystem::path& dir, const std::string& name,
                  std::vector<std::string>& stack) {
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw Error(ErrorCategory::config, name + ":" + std::to_string(lineno) + ": expected key = value");
      const auto key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
      if (key.empty()) throw Error(ErrorCategory::config, name + ":" + std::to_string(lineno) + ": empty key");
      if (key == "include") {
        load_into(dir / value, stack);
      } else {
        values_[key] = value;
      }
    }
  }

  std::map<std::string, std::string> values_;
};

}  // namespace sphcam
