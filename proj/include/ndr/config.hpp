#pragma once

// Flat key=value configuration files with `include` support plus
// command-line overrides. Values are strings until queried; the serialized
// sorted form feeds the checkpoint compatibility hash.

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "ndr/common.hpp"

namespace ndr {

class ConfigMap {
 public:
  static ConfigMap load(const std::filesystem::path& path) {
    ConfigMap c;
    c.load_into(path, 0);
    return c;
  }

  // "key=value" as given on a command line; later overrides win.
  void apply_override(const std::string& assignment) {
    auto eq = assignment.find('=');
    NDR_CHECK(eq != std::string::npos && eq > 0,
              "config: override must be key=value, got '" + assignment + "'");
    kv_[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
  }

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get_str(const std::string& key, const std::string& dflt) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? dflt : it->second;
  }
  double get_double(const std::string& key, double dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    try {
      size_t pos = 0;
      double v = std::stod(it->second, &pos);
      NDR_CHECK(pos == it->second.size(), "trailing junk");
      return v;
    } catch (const std::exception&) {
      throw Error("config: key '" + key + "' is not a number: '" + it->second + "'");
    }
  }
  int get_int(const std::string& key, int dflt) const {
    double v = get_double(key, dflt);
    int i = static_cast<int>(v);
    NDR_CHECK(static_cast<double>(i) == v,
              "config: key '" + key + "' must be an integer");
    return i;
  }
  bool get_bool(const std::string& key, bool dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    const std::string& s = it->second;
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw Error("config: key '" + key + "' is not a boolean: '" + s + "'");
  }

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }

  // Sorted key=value lines; stable across load order.
  std::string serialize() const {
    std::string out;
    for (const auto& [k, v] : kv_) out += k + "=" + v + "\n";
    return out;
  }

  // FNV-1a over the serialized form.
  uint64_t hash() const {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : serialize()) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return h;
  }

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  static std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
  }

  void load_into(const std::filesystem::path& path, int depth) {
    NDR_CHECK(depth < 8, "config: include depth limit exceeded at " + path.string());
    std::ifstream f(path);
    NDR_CHECK(f.good(), "config: cannot open " + path.string());
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      auto hash_pos = line.find('#');
      if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
      std::string t = trim(line);
      if (t.empty()) continue;
      if (t.rfind("include ", 0) == 0) {
        std::filesystem::path inc = trim(t.substr(8));
        if (inc.is_relative()) inc = path.parent_path() / inc;
        load_into(inc, depth + 1);
        continue;
      }
      auto eq = t.find('=');
      NDR_CHECK(eq != std::string::npos && eq > 0,
                "config: " + path.string() + ":" + std::to_string(lineno) +
                    ": expected key=value, got '" + t + "'");
      kv_[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
  }

  std::map<std::string, std::string> kv_;
};

}  // namespace ndr
