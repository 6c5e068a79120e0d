#pragma once

// Small text helpers shared by the file readers and writers.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fdti/error.hpp"

namespace fdti {

/// Shortest form is not required; 17 significant digits always round-trips.
inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

inline double parse_real(std::string_view s, const std::string& ctx) {
  s = trim(s);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw ValidationError(ctx + ": bad real '" + std::string(s) + "'");
  return v;
}

inline long long parse_int(std::string_view s, const std::string& ctx) {
  s = trim(s);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw ValidationError(ctx + ": bad integer '" + std::string(s) + "'");
  return v;
}

/// Splits delimited text into non-empty lines; the first line must equal `header`.
inline std::vector<std::string_view> csv_rows(std::string_view text, std::string_view header,
                                              const std::string& ctx) {
  std::vector<std::string_view> rows;
  bool seen_header = false;
  for (auto line : split(text, '\n')) {
    line = trim(line);
    if (line.empty()) continue;
    if (!seen_header) {
      if (line != header)
        throw ValidationError(ctx + ": expected header '" + std::string(header) + "'");
      seen_header = true;
      continue;
    }
    rows.push_back(line);
  }
  if (!seen_header) throw ValidationError(ctx + ": missing header");
  return rows;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace fdti
