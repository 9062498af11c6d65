#pragma once

#include <string>
#include <vector>

#include "expinf/simulation.hpp"

namespace expinf::io {

/// A parsed study file: the base configuration plus the signal grid
/// (the `k` key accepts a comma list and expands to one study per value).
struct StudyFile {
  StudyConfig config;
  std::vector<double> k_values;
};

/// Flat key = value format, '#' comments, unknown keys rejected. Coordinates
/// in `test` are 1-based to match the usual table conventions.
StudyFile read_study_config(const std::string& path);

}  // namespace expinf::io
