#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace gat::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

// Reads a numeric CSV with one header line. Blank lines are skipped; every
// row must have the header's column count.
Table read(const std::filesystem::path& path);

// Writes with round-trip precision (max_digits10).
void write(const std::filesystem::path& path, const Table& table);

std::string format_double(double v);

}  // namespace gat::csv
