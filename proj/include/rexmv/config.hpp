#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rexmv/linalg.hpp"

namespace rexmv {

// Flat key=value configuration. Groups use dotted keys (set.type,
// surface.mode); insertion order is irrelevant to the hash, which runs
// over the sorted entries so logically equal files hash alike.
class Config {
 public:
  Config() = default;

  static Config from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_text(buf.str(), path);
  }

  static Config from_text(const std::string& text,
                          const std::string& origin = "<text>") {
    Config cfg;
    std::istringstream in(text);
    std::string row;
    long line = 0;
    while (std::getline(in, row)) {
      ++line;
      if (!row.empty() && row.back() == '\r') row.pop_back();
      const auto hash = row.find('#');
      if (hash != std::string::npos) row.erase(hash);
      const std::string trimmed = trim(row);
      if (trimmed.empty()) continue;
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw ParseError(origin + " line " + std::to_string(line) +
                         ": expected key=value");
      const std::string key = trim(trimmed.substr(0, eq));
      if (key.empty())
        throw ParseError(origin + " line " + std::to_string(line) +
                         ": empty key");
      cfg.values_[key] = trim(trimmed.substr(eq + 1));
    }
    return cfg;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  void set(const std::string& key, const std::string& value) {
    values_[key] = value;
  }

  std::string str(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string require(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ParseError("missing config key '" + key + "'");
    return it->second;
  }

  double num(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : parse_num(key, it->second);
  }

  long integer(const std::string& key, long fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t used = 0;
      const long v = std::stol(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ParseError("config key '" + key + "': bad integer '" +
                       it->second + "'");
    }
  }

  // Comma or space separated numbers.
  Vec vec(const std::string& key, const Vec& fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const auto parts = split_list(it->second);
    Vec v(static_cast<Eigen::Index>(parts.size()));
    for (std::size_t i = 0; i < parts.size(); ++i)
      v[static_cast<Eigen::Index>(i)] = parse_num(key, parts[i]);
    return v;
  }

  // Semicolon-separated rows of comma/space-separated numbers.
  Mat mat(const std::string& key) const {
    const std::string text = require(key);
    std::vector<std::vector<double>> rows;
    std::istringstream in(text);
    std::string row;
    while (std::getline(in, row, ';')) {
      const auto parts = split_list(row);
      if (parts.empty()) continue;
      rows.emplace_back();
      for (const auto& p : parts) rows.back().push_back(parse_num(key, p));
    }
    if (rows.empty()) throw ParseError("config key '" + key + "': empty matrix");
    Mat m(static_cast<Eigen::Index>(rows.size()),
          static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows[0].size())
        throw ParseError("config key '" + key + "': ragged matrix rows");
      for (std::size_t j = 0; j < rows[i].size(); ++j)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            rows[i][j];
    }
    return m;
  }

  const std::map<std::string, std::string>& entries() const { return values_; }

  // FNV-1a over the sorted "key=value\n" lines.
  std::uint64_t hash() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    auto feed = [&h](const std::string& s) {
      for (const unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001B3ULL;
      }
    };
    for (const auto& [k, v] : values_) {
      feed(k);
      feed("=");
      feed(v);
      feed("\n");
    }
    return h;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
  }

  static std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (const char ch : s) {
      if (ch == ',' || ch == ' ' || ch == '\t') {
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(ch);
      }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
  }

  static double parse_num(const std::string& key, const std::string& text) {
    try {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ParseError("config key '" + key + "': bad number '" + text + "'");
    }
  }

  std::map<std::string, std::string> values_;
};

}  // namespace rexmv
