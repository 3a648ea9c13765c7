#include "fuselab/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "fuselab/error.hpp"

namespace fuselab::csv {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace

Table parse(const std::string& text, const std::string& origin) {
  Table table;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split(line);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw ParseError(origin + " line " + std::to_string(number) + ": expected " +
                       std::to_string(table.header.size()) + " fields, found " + std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(number);
  }
  return table;
}

Table read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

std::string join(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    out += fields[i];
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string format_double(double v) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, result.ptr);
}

double parse_double(const std::string& field, const std::string& where) {
  double v = 0.0;
  const auto result = std::from_chars(field.data(), field.data() + field.size(), v);
  if (result.ec != std::errc() || result.ptr != field.data() + field.size()) {
    throw ParseError(where + ": \"" + field + "\" is not a number");
  }
  return v;
}

long long parse_int(const std::string& field, const std::string& where) {
  long long v = 0;
  const auto result = std::from_chars(field.data(), field.data() + field.size(), v);
  if (result.ec != std::errc() || result.ptr != field.data() + field.size()) {
    throw ParseError(where + ": \"" + field + "\" is not an integer");
  }
  return v;
}

std::size_t column(const Table& table, const std::string& name, const std::string& origin) {
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (table.header[i] == name) return i;
  }
  throw ParseError(origin + ": missing column \"" + name + "\"");
}

}  // namespace fuselab::csv
