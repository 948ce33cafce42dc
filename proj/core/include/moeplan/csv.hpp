#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace moeplan::csv {

// Splits on ',' and trims ASCII whitespace. No quoting; the files read here
// are numeric tables.
std::vector<std::string> split_line(std::string_view line);

// Calls `row(fields, line_number)` for every non-blank, non-'#' line.
// A first line whose first field is `header_key` is skipped.
void for_each_row(std::istream& in, std::string_view header_key,
                  const std::function<void(const std::vector<std::string>&, int)>& row);

// Parse helpers throwing ConfigError with "<origin>:<line>: <column>" context.
double parse_double(const std::string& field, std::string_view origin, int line, std::string_view column);
std::int64_t parse_int(const std::string& field, std::string_view origin, int line, std::string_view column);

}  // namespace moeplan::csv
