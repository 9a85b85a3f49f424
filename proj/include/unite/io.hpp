#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace unite {

// Shortest decimal form that parses back to the identical double.
std::string format_double(double value);

// Full-field parse; throws std::invalid_argument on trailing junk or non-finite values.
double parse_double(std::string_view field);

std::string read_file(const std::string& path);
// Truncates; throws DataError naming the path on failure.
void write_file(const std::string& path, std::string_view content);

std::vector<std::string_view> split_fields(std::string_view line, char delim);

// Splits on LF, strips a trailing CR, keeps empty lines.
std::vector<std::string_view> split_lines(std::string_view text);

}  // namespace unite
