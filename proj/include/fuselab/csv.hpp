#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace fuselab::csv {

/// Comma-separated rows without quoting; fields must not contain commas or newlines.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row
};

/// Parses text; an empty input yields an empty table (no header).
Table parse(const std::string& text, const std::string& origin);
Table read(const std::filesystem::path& path);

std::string join(const std::vector<std::string>& fields);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Shortest representation that parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& field, const std::string& where);
long long parse_int(const std::string& field, const std::string& where);

/// Column index by name, or ParseError naming the file.
std::size_t column(const Table& table, const std::string& name, const std::string& origin);

}  // namespace fuselab::csv
