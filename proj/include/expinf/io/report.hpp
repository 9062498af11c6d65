#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "expinf/simulation.hpp"

namespace expinf::io {

struct CoefficientReport {
  std::string name;
  double beta = 0.0;      // penalized estimate, original scale
  double beta_de = 0.0;   // de-biased estimate, original scale
  double se = 0.0;
  double z = 0.0;
  double p_value = 1.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  bool degenerate = false;
};

struct GroupTestReport {
  std::string label;
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  bool reject = false;
};

struct TauReport {
  double tau = 0.5;
  double lambda = 0.0;
  double nodewise_lambda = 0.0;
  std::vector<CoefficientReport> coefficients;
  std::vector<GroupTestReport> tests;
};

struct AnalyzeReport {
  std::string input;
  std::string response;
  bool standardized = true;
  std::string method;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  std::vector<TauReport> taus;
};

void write_analyze_json(const std::string& path, const AnalyzeReport& report);
void write_analyze_csv(const std::string& path, const AnalyzeReport& report);

/// One CSV row per study grid: the design columns followed by one
/// rejection-rate column per k. Timing never enters result files, so repeated
/// runs are byte-identical.
void write_study_csv(const std::string& path, const std::vector<StudyResult>& results,
                     const std::vector<double>& k_values);
void write_study_json(const std::string& path, const std::vector<StudyResult>& results,
                      const std::vector<double>& k_values);

void write_cv_csv(const std::string& path, const std::vector<std::pair<double, double>>& table,
                  double lambda_star);

}  // namespace expinf::io
