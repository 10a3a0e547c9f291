#include "loid/csv.hpp"

#include <fstream>

#include "loid/error.hpp"

namespace loid {

namespace {

// Parses one record; returns false at end of input with nothing read.
bool next_record(std::istream& in, std::vector<std::string>& out, std::size_t& line) {
  out.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && field.empty()) {
      in_quotes = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (c == '\r') {
      if (in.peek() == '\n') in.get(c);
      ++line;
      out.push_back(std::move(field));
      return true;
    } else if (c == '\n') {
      ++line;
      out.push_back(std::move(field));
      return true;
    } else {
      field.push_back(c);
    }
  }
  if (in_quotes) throw DataError("csv: unterminated quoted field near line " + std::to_string(line + 1));
  if (!any) return false;
  out.push_back(std::move(field));
  return true;
}

bool blank(const std::vector<std::string>& rec) {
  return rec.size() == 1 && rec[0].find_first_not_of(" \t") == std::string::npos;
}

}  // namespace

CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::vector<std::string> rec;
  std::size_t line = 0;
  while (next_record(in, rec, line)) {
    if (blank(rec)) continue;
    if (table.header.empty()) {
      table.header = rec;
      continue;
    }
    if (rec.size() != table.header.size()) {
      throw DataError("csv: record at line " + std::to_string(line) + " has " + std::to_string(rec.size()) +
                      " fields, header has " + std::to_string(table.header.size()));
    }
    table.records.push_back(rec);
  }
  if (table.header.empty()) throw DataError("csv: empty file");
  return table;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("csv: cannot open " + path);
  return read_csv(in);
}

}  // namespace loid
