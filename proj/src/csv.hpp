#pragma once

#include <string>
#include <vector>

namespace dnnh {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column, or -1.
  int Column(const std::string& name) const;
};

// RFC-4180-style line splitting: commas, double quotes with "" escapes.
std::vector<std::string> SplitCsvLine(const std::string& line);

// Reads a CSV file with a header row. Throws kIo / kData.
CsvTable ReadCsv(const std::string& path);

std::string CsvEscape(const std::string& field);

}  // namespace dnnh
