#pragma once

#include <charconv>
#include <cstdio>
#include <system_error>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "soilfusion/error.hpp"

namespace soilfusion::csv {

/// Parsed CSV file: header plus data rows, all fields as strings.
struct Table {
  std::string source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column, or nullopt.
  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  }

  std::size_t require(std::string_view name) const {
    if (auto i = find(name)) return *i;
    throw Error(ErrorKind::SchemaError, source + ": missing required column '" + std::string(name) + "'");
  }
};

inline std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

inline Table parse(std::string_view text, std::string source = "<memory>") {
  Table table;
  table.source = std::move(source);
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool have_header = false;
  if (text.starts_with("\xEF\xBB\xBF")) pos = 3;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto fields = split_line(line);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw Error(ErrorKind::SchemaError, table.source + ":" + std::to_string(line_no) + ": expected " +
                                              std::to_string(table.header.size()) + " fields, found " +
                                              std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  if (!have_header) throw Error(ErrorKind::SchemaError, table.source + ": missing header row");
  return table;
}

inline Table read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), path);
}

inline std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline std::string join(const std::vector<std::string>& fields) {
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) line += ',';
    line += escape(fields[i]);
  }
  return line;
}

/// Locale-independent formatting: shortest round-trip form by default,
/// "%.<digits>g" when a digit count is given.
inline std::string format_number(double value, int significant_digits = 0) {
  char buf[64];
  if (significant_digits <= 0) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
  }
  std::snprintf(buf, sizeof buf, "%.*g", significant_digits, value);
  return buf;
}

/// Parses a full-field number; blank fields are reported as nullopt.
inline std::optional<double> parse_optional_number(std::string_view field, const std::string& where) {
  std::size_t b = 0, e = field.size();
  while (b < e && (field[b] == ' ' || field[b] == '\t')) ++b;
  while (e > b && (field[e - 1] == ' ' || field[e - 1] == '\t')) --e;
  if (b == e) return std::nullopt;
  const char* first = field.data() + b;
  const char* last = field.data() + e;
  if (*first == '+') ++first;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw Error(ErrorKind::SchemaError, where + ": not a number: '" + std::string(field.substr(b, e - b)) + "'");
  }
  return v;
}

inline double parse_number(std::string_view field, const std::string& where) {
  auto v = parse_optional_number(field, where);
  if (!v) throw Error(ErrorKind::SchemaError, where + ": missing value");
  return *v;
}

class Writer {
 public:
  explicit Writer(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw Error(ErrorKind::IoError, "cannot write " + path);
  }
  void row(const std::vector<std::string>& fields) { out_ << join(fields) << '\n'; }
  void close() {
    out_.close();
    if (!out_) throw Error(ErrorKind::IoError, "failed writing " + path_);
  }

 private:
  std::string path_;
  std::ofstream out_;
};

}  // namespace soilfusion::csv
