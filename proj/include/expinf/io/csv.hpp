#pragma once

#include <string>
#include <vector>

#include "expinf/types.hpp"

namespace expinf::io {

struct CsvTable {
  std::vector<std::string> headers;
  Matrix values;

  Index column(const std::string& name) const;  // throws DataError if absent
};

/// Strict numeric CSV: comma-separated, first row headers, '.' decimal,
/// RFC-4180 quoting only. Rejects NaN/inf cells, ragged rows and duplicate
/// headers, naming the offending row and column.
CsvTable read_csv(const std::string& path);

/// Doubles formatted with 17 significant digits so a re-parse is bit-exact.
std::string format_double(double v);

}  // namespace expinf::io
