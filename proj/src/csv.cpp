#include "expinf/io/csv.hpp"

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "expinf/errors.hpp"

namespace expinf::io {

namespace {

/// Splits one CSV record; supports RFC-4180 quoted fields with doubled quotes.
std::vector<std::string> split_record(const std::string& line, std::size_t row) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      if (!cur.empty()) {
        throw DataError("CSV row " + std::to_string(row) + ": stray quote mid-field");
      }
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (quoted) throw DataError("CSV row " + std::to_string(row) + ": unterminated quote");
  fields.push_back(cur);
  return fields;
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

double parse_cell(const std::string& raw, std::size_t row, const std::string& col) {
  const std::string s = trim(raw);
  if (s.empty()) {
    throw DataError("CSV row " + std::to_string(row) + ", column '" + col + "': empty cell");
  }
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE) {
    throw DataError("CSV row " + std::to_string(row) + ", column '" + col +
                    "': cannot parse '" + s + "' as a number");
  }
  if (!std::isfinite(v)) {
    throw DataError("CSV row " + std::to_string(row) + ", column '" + col +
                    "': non-finite value '" + s + "'");
  }
  return v;
}

}  // namespace

Index CsvTable::column(const std::string& name) const {
  for (std::size_t j = 0; j < headers.size(); ++j) {
    if (headers[j] == name) return static_cast<Index>(j);
  }
  throw DataError("column '" + name + "' not found in CSV header");
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open CSV file: " + path);
  std::string line;
  std::vector<std::vector<std::string>> rows;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
    rows.push_back(split_record(line, lineno));
  }
  if (rows.empty()) throw DataError("CSV file is empty: " + path);

  CsvTable table;
  for (auto& h : rows[0]) table.headers.push_back(trim(h));
  std::set<std::string> seen;
  for (const auto& h : table.headers) {
    if (h.empty()) throw DataError("CSV header has an empty column name");
    if (!seen.insert(h).second) throw DataError("duplicate CSV header: '" + h + "'");
  }
  const std::size_t ncol = table.headers.size();
  const std::size_t nrow = rows.size() - 1;
  if (nrow == 0) throw DataError("CSV has a header but no data rows: " + path);

  table.values.resize(static_cast<Index>(nrow), static_cast<Index>(ncol));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != ncol) {
      throw DataError("CSV row " + std::to_string(i + 1) + " has " +
                      std::to_string(rows[i].size()) + " fields, expected " +
                      std::to_string(ncol));
    }
    for (std::size_t j = 0; j < ncol; ++j) {
      table.values(static_cast<Index>(i - 1), static_cast<Index>(j)) =
          parse_cell(rows[i][j], i + 1, table.headers[j]);
    }
  }
  return table;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace expinf::io
