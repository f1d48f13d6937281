#pragma once
// Comma-separated text helpers shared by the track, corpus and export files.

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "transfusor/config.hpp"
#include "transfusor/errors.hpp"

namespace transfusor::csv {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = line.find(sep, start);
    out.push_back(trim(line.substr(start, end == std::string_view::npos ? end : end - start)));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

// Location of a field for error messages: "file:line, column 'x'".
inline std::string where(std::string_view source, std::size_t line, std::string_view column) {
  return std::string(source) + ":" + std::to_string(line) + ", column '" + std::string(column) + "'";
}

inline double parse_double(std::string_view field, std::string_view source, std::size_t line,
                           std::string_view column) {
  double v = 0.0;
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty())
    throw FormatError(where(source, line, column) + ": '" + std::string(field) +
                      "' is not a number");
  return v;
}

inline std::int64_t parse_int(std::string_view field, std::string_view source, std::size_t line,
                              std::string_view column) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty())
    throw FormatError(where(source, line, column) + ": '" + std::string(field) +
                      "' is not an integer");
  return v;
}

using transfusor::format_double;

}  // namespace transfusor::csv
