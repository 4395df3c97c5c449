#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace jetflow {

// Locale-independent decimal formatting with 17 significant digits, enough
// to round-trip any double exactly.
std::string format_double(double v);

// Shortest representation that still round-trips; used for figure output.
std::string format_double_short(double v);

// Locale-independent parse; returns false on trailing garbage or overflow.
bool parse_double(std::string_view text, double* out);
bool parse_int(std::string_view text, int* out);

std::vector<std::string_view> split_fields(std::string_view line);

// Write via a temporary file in the same directory followed by a rename, so
// readers never observe a partial file.
void write_file_atomic(const std::string& path, const std::string& contents);

std::string read_file(const std::string& path);

}  // namespace jetflow
