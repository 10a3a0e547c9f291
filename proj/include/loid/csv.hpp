#pragma once

#include <istream>
#include <string>
#include <vector>

namespace loid {

// Minimal RFC 4180 reader: comma separated, double-quoted fields with ""
// escapes, CRLF or LF line endings. The first record is the header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> records;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

}  // namespace loid
