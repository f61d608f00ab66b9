#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mlmpc {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// All numeric text emitted by this project goes through fmt_double: 17
// significant digits round-trip IEEE doubles exactly, which is what makes the
// CSV outputs byte-reproducible and lossless.
inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(std::string_view text, const std::string& context) {
  char* end = nullptr;
  std::string owned(text);
  const double v = std::strtod(owned.c_str(), &end);
  if (end == owned.c_str() || *end != '\0') {
    throw ParseError(context + ": not a number: '" + owned + "'");
  }
  return v;
}

inline long parse_long(std::string_view text, const std::string& context) {
  char* end = nullptr;
  std::string owned(text);
  const long v = std::strtol(owned.c_str(), &end, 10);
  if (end == owned.c_str() || *end != '\0') {
    throw ParseError(context + ": not an integer: '" + owned + "'");
  }
  return v;
}

inline std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      fields.emplace_back(line.substr(start));
      break;
    }
    fields.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << content;
  if (!out) throw std::runtime_error(path + ": write failed");
}

}  // namespace mlmpc
