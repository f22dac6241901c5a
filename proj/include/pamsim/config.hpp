#pragma once

// Plain-text `key = value` configuration files. '#' starts a comment; blank
// lines are ignored. Keys are tracked as they are consumed so that unknown
// keys can be reported instead of silently ignored.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <type_traits>
#include <string>
#include <vector>

#include "pamsim/error.hpp"

namespace pamsim {

class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(const std::string& text) {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw Error(ErrorKind::Config, "line " + std::to_string(line_no) + ": expected key = value");
      }
      std::string key = trim(line.substr(0, eq));
      std::string value = trim(line.substr(eq + 1));
      if (key.empty()) throw Error(ErrorKind::Config, "line " + std::to_string(line_no) + ": empty key");
      cfg.values_[key] = value;
    }
    return cfg;
  }

  static KeyValueConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Config, "cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  void get(const std::string& key, double& out) const {
    if (auto v = take(key)) {
      try {
        std::size_t used = 0;
        out = std::stod(*v, &used);
        if (used != v->size()) throw std::invalid_argument(key);
      } catch (const std::exception&) {
        throw Error(ErrorKind::Config, key + ": expected a number, got '" + *v + "'");
      }
    }
  }

  template <typename Int>
    requires std::is_integral_v<Int>
  void get(const std::string& key, Int& out) const {
    if (auto v = take(key)) {
      try {
        std::size_t used = 0;
        const long long parsed = std::stoll(*v, &used);
        if (used != v->size() || parsed < 0) throw std::invalid_argument(key);
        out = static_cast<Int>(parsed);
      } catch (const std::exception&) {
        throw Error(ErrorKind::Config, key + ": expected a non-negative integer, got '" + *v + "'");
      }
    }
  }

  void get(const std::string& key, bool& out) const {
    if (auto v = take(key)) {
      if (*v == "true" || *v == "1" || *v == "yes") {
        out = true;
      } else if (*v == "false" || *v == "0" || *v == "no") {
        out = false;
      } else {
        throw Error(ErrorKind::Config, key + ": expected a boolean, got '" + *v + "'");
      }
    }
  }

  void get(const std::string& key, std::string& out) const {
    if (auto v = take(key)) out = *v;
  }

  std::vector<std::string> unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) {
      if (!consumed_.count(k)) out.push_back(k);
    }
    return out;
  }

  // FNV-1a over the sorted key/value pairs; independent of file layout,
  // comments and key order.
  std::string hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](const std::string& s) {
      for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
      }
    };
    for (const auto& [k, v] : values_) {
      mix(k);
      mix("=");
      mix(v);
      mix("\n");
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
  }

  const std::string* take(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return nullptr;
    consumed_.insert(key);
    return &it->second;
  }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> consumed_;
};

}  // namespace pamsim
