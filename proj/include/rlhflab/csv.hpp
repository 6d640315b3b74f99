#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace rlhflab::csv {

// UTF-8, '\n' line endings, '.' decimal separator, header in row 1.
// Doubles print with 17 significant digits so reading them back is exact.

std::string format_double(double v);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

std::string to_string(const Table& t);
Table parse(const std::string& text);

// Writes to `<path>.tmp` then renames, so a crash never leaves a partial file
// at the final path.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
void write_table(const std::filesystem::path& path, const Table& t);
Table read_table(const std::filesystem::path& path);

double parse_double(const std::string& s);
long long parse_int(const std::string& s);

}  // namespace rlhflab::csv
