#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace homlab {

/// Shortest round-trip decimal form ("%.17g" trimmed), so CSVs are byte-stable.
std::string format_number(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row);
  std::string str() const;
  void write(const std::filesystem::path& path) const;
};

CsvTable read_csv(const std::filesystem::path& path);

}  // namespace homlab
