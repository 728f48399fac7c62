#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

// Minimal RFC 4180 reading/writing: comma separated, double-quote quoting,
// "" as an escaped quote, LF or CRLF line ends.
namespace agest::csv {

struct Row {
  std::size_t line = 0;  // 1-based physical line the row starts on
  std::vector<std::string> fields;
};

std::vector<Row> read(std::istream& in);
std::vector<Row> read_file(const std::string& path);

std::string quote(const std::string& field);
std::string join(const std::vector<std::string>& fields);  // no trailing newline

}  // namespace agest::csv
