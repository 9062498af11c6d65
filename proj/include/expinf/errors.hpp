#pragma once

#include <stdexcept>
#include <string>

namespace expinf {

/// Malformed user input: bad CSV cells, inconsistent hypothesis specs, bad config keys.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Numeric failure: singular systems, degenerate variances, non-convergence.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace expinf
