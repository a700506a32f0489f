#pragma once

// Flat `key = value` configuration files. '#' starts a comment; blank lines
// are ignored; later keys override earlier ones.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "soilfusion/csv.hpp"
#include "soilfusion/error.hpp"

namespace soilfusion {

class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(std::string_view text, const std::string& source = "<memory>") {
    KeyValueConfig cfg;
    cfg.source_ = source;
    std::size_t pos = 0, line_no = 0;
    while (pos <= text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      std::string_view line = text.substr(pos, end - pos);
      pos = end + 1;
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) {
        if (end == text.size()) break;
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw Error(ErrorKind::ConfigError, source + ":" + std::to_string(line_no) + ": expected 'key = value'");
      }
      const auto key = trim(line.substr(0, eq));
      if (key.empty()) throw Error(ErrorKind::ConfigError, source + ":" + std::to_string(line_no) + ": empty key");
      cfg.values_[std::string(key)] = std::string(trim(line.substr(eq + 1)));
      if (end == text.size()) break;
    }
    return cfg;
  }

  static KeyValueConfig read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open config " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path);
  }

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  bool has(std::string_view key) const { return values_.find(std::string(key)) != values_.end(); }

  std::optional<std::string> get(std::string_view key) const {
    auto it = values_.find(std::string(key));
    if (it == values_.end()) return std::nullopt;
    used_[it->first] = true;
    return it->second;
  }

  std::string get_string(std::string_view key, std::string fallback) const { return get(key).value_or(fallback); }

  double get_double(std::string_view key, double fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    return csv::parse_number(*v, where(key));
  }

  std::int64_t get_int(std::string_view key, std::int64_t fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    std::int64_t out = 0;
    auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || p != v->data() + v->size()) {
      throw Error(ErrorKind::ConfigError, where(key) + ": expected an integer, got '" + *v + "'");
    }
    return out;
  }

  std::uint64_t get_uint(std::string_view key, std::uint64_t fallback) const {
    const auto v = get_int(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw Error(ErrorKind::ConfigError, where(key) + ": must be non-negative");
    return static_cast<std::uint64_t>(v);
  }

  bool get_bool(std::string_view key, bool fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    throw Error(ErrorKind::ConfigError, where(key) + ": expected a boolean, got '" + *v + "'");
  }

  /// Comma-separated list; an absent key yields `fallback`.
  std::vector<std::string> get_list(std::string_view key, std::vector<std::string> fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    std::vector<std::string> out;
    for (auto& f : csv::split_line(*v)) {
      auto t = trim(f);
      if (!t.empty()) out.emplace_back(t);
    }
    return out;
  }

  std::vector<double> get_numbers(std::string_view key, std::vector<double> fallback) const {
    if (!has(key)) return fallback;
    std::vector<double> out;
    for (const auto& s : get_list(key, {})) out.push_back(csv::parse_number(s, where(key)));
    return out;
  }

  /// Keys never read through a getter; used to reject typos.
  std::vector<std::string> unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) {
      if (!used_.count(k)) out.push_back(k);
    }
    return out;
  }

  const std::string& source() const { return source_; }

 private:
  static std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
  }

  std::string where(std::string_view key) const { return source_ + ": key '" + std::string(key) + "'"; }

  std::string source_ = "<memory>";
  std::map<std::string, std::string> values_;
  mutable std::map<std::string, bool> used_;
};

}  // namespace soilfusion
