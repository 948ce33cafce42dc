#include "moeplan/csv.hpp"

#include <charconv>
#include <cmath>

#include <fmt/format.h>

#include "moeplan/error.hpp"

namespace moeplan::csv {
namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

void for_each_row(std::istream& in, std::string_view header_key,
                  const std::function<void(const std::vector<std::string>&, int)>& row) {
  std::string line;
  int line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto fields = split_line(t);
    if (first) {
      first = false;
      if (!fields.empty() && fields.front() == header_key) continue;
    }
    row(fields, line_no);
  }
}

double parse_double(const std::string& field, std::string_view origin, int line, std::string_view column) {
  double value = 0.0;
  const char* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc{} || ptr != end || !std::isfinite(value)) {
    throw ConfigError(fmt::format("{}:{}: column '{}': expected a number, got '{}'", origin, line, column, field));
  }
  return value;
}

std::int64_t parse_int(const std::string& field, std::string_view origin, int line, std::string_view column) {
  std::int64_t value = 0;
  const char* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError(fmt::format("{}:{}: column '{}': expected an integer, got '{}'", origin, line, column, field));
  }
  return value;
}

}  // namespace moeplan::csv
