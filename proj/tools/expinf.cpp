#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "expinf/errors.hpp"
#include "expinf/inference.hpp"
#include "expinf/io/csv.hpp"
#include "expinf/io/report.hpp"
#include "expinf/io/study_config.hpp"
#include "expinf/nodewise.hpp"
#include "expinf/simulation.hpp"
#include "expinf/solver.hpp"
#include "expinf/version.hpp"

namespace {

using namespace expinf;

std::vector<double> parse_tau_list(const std::string& spec) {
  std::vector<double> taus;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      taus.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw DataError("cannot parse tau value '" + item + "'");
    }
  }
  if (taus.empty()) throw DataError("empty tau list");
  return taus;
}

std::vector<std::string> parse_name_list(const std::string& spec) {
  std::vector<std::string> names;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    while (!item.empty() && item.front() == ' ') item.erase(item.begin());
    while (!item.empty() && item.back() == ' ') item.pop_back();
    if (!item.empty()) names.push_back(item);
  }
  return names;
}

std::string stem_of(const std::string& path) {
  const std::size_t slash = path.find_last_of('/');
  const std::size_t from = slash == std::string::npos ? 0 : slash + 1;
  const std::size_t dot = path.find_last_of('.');
  if (dot == std::string::npos || dot < from) return path;
  return path.substr(0, dot);
}

struct Standardization {
  Vector center;
  Vector scale;
};

Standardization standardize_columns(Matrix& x, bool enabled) {
  const Index p = x.cols();
  Standardization s{Vector::Zero(p), Vector::Ones(p)};
  if (!enabled) return s;
  const double n = static_cast<double>(x.rows());
  for (Index j = 0; j < p; ++j) {
    const double mean = x.col(j).mean();
    const double sd = std::sqrt((x.col(j).array() - mean).square().sum() / n);
    if (sd < 1e-12) {
      std::cerr << "note: column " << j << " is (near) constant; left unstandardized\n";
      continue;
    }
    s.center(j) = mean;
    s.scale(j) = sd;
    x.col(j) = (x.col(j).array() - mean) / sd;
  }
  return s;
}

struct AnalyzeArgs {
  std::string input;
  std::string y_name;
  std::string tau_spec = "0.5";
  std::string method = "la-la";
  std::string test_spec;
  std::string test_file;
  std::string out_prefix;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  bool no_standardize = false;
  int threads = 1;
  int folds = 10;
};

int run_analyze(const AnalyzeArgs& args) {
  const io::CsvTable table = io::read_csv(args.input);
  const Index ycol = table.column(args.y_name);
  const Index p = table.values.cols() - 1;
  if (p < 1) throw DataError("need at least one covariate column besides the response");

  std::vector<std::string> names;
  Matrix x(table.values.rows(), p);
  {
    Index j = 0;
    for (Index c = 0; c < table.values.cols(); ++c) {
      if (c == ycol) continue;
      names.push_back(table.headers[static_cast<std::size_t>(c)]);
      x.col(j++) = table.values.col(c);
    }
  }
  Vector y = table.values.col(ycol);

  Matrix r_matrix;
  Vector c_vector;
  std::string test_label;
  if (!args.test_spec.empty() && !args.test_file.empty()) {
    throw DataError("give either --test or --test-file, not both");
  }
  if (!args.test_spec.empty()) {
    const auto test_names = parse_name_list(args.test_spec);
    if (test_names.empty()) throw DataError("--test parsed to an empty name list");
    r_matrix = Matrix::Zero(static_cast<Index>(test_names.size()), p);
    for (std::size_t i = 0; i < test_names.size(); ++i) {
      Index j = -1;
      for (std::size_t k = 0; k < names.size(); ++k) {
        if (names[k] == test_names[i]) j = static_cast<Index>(k);
      }
      if (j < 0) {
        throw DataError("hypothesis column '" + test_names[i] + "' not found among covariates");
      }
      r_matrix(static_cast<Index>(i), j) = 1.0;
      test_label += (i ? "," : "") + test_names[i];
    }
    c_vector = Vector::Zero(r_matrix.rows());
    test_label = "H0: " + test_label + " = 0";
  } else if (!args.test_file.empty()) {
    std::ifstream in(args.test_file);
    if (!in) throw DataError("cannot open test file: " + args.test_file);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const std::exception& e) {
      throw DataError(std::string("cannot parse test file JSON: ") + e.what());
    }
    if (!j.contains("R") || !j["R"].is_array()) throw DataError("test file needs an 'R' array");
    const auto& rows = j["R"];
    r_matrix = Matrix::Zero(static_cast<Index>(rows.size()), p);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (static_cast<Index>(rows[i].size()) != p) {
        throw DataError("test file R row " + std::to_string(i) + " has wrong length");
      }
      for (Index l = 0; l < p; ++l) r_matrix(static_cast<Index>(i), l) = rows[i][l].get<double>();
    }
    c_vector = Vector::Zero(r_matrix.rows());
    if (j.contains("c")) {
      if (static_cast<Index>(j["c"].size()) != r_matrix.rows()) {
        throw DataError("test file c has wrong length");
      }
      for (Index i = 0; i < r_matrix.rows(); ++i) c_vector(i) = j["c"][i].get<double>();
    }
    test_label = "H0: R beta = c (from " + args.test_file + ")";
  }

  const Standardization std_info = standardize_columns(x, !args.no_standardize);
  const Dataset data(std::move(x), std::move(y));
  const PenaltyKind kind = args.method == "sc-sc" ? PenaltyKind::scad : PenaltyKind::lasso;
  if (args.method != "la-la" && args.method != "sc-sc") {
    throw DataError("method must be 'la-la' or 'sc-sc', got '" + args.method + "'");
  }
  SolverOptions sopts;
  if (kind == PenaltyKind::scad) sopts.lla_stages = 3;

  io::AnalyzeReport report;
  report.input = args.input;
  report.response = args.y_name;
  report.standardized = !args.no_standardize;
  report.method = args.method;
  report.alpha = args.alpha;
  report.seed = args.seed;

  for (double tau_value : parse_tau_list(args.tau_spec)) {
    const ExpectileLevel tau(tau_value);
    const CvResult cv = cross_validate(data, tau, kind, {}, args.folds,
                                       derive_seed(args.seed, 0, 1), sopts);
    NodewiseOptions nopts;
    nopts.solver = sopts;
    nopts.cv_folds = args.folds;
    nopts.seed = derive_seed(args.seed, 0, 2);
    nopts.threads = args.threads;
    const PrecisionEstimate pe = nodewise_precision(data, cv.fit, kind, {}, {}, nopts);
    DebiasResult dr = debias(data, cv.fit, pe);

    // Back-transform to the original scale: beta_j / scale_j, Omega scaled by
    // the same diagonal on both sides. The centering constant is absorbed and
    // not reported.
    const Vector inv_scale = std_info.scale.cwiseInverse();
    dr.beta_de = dr.beta_de.cwiseProduct(inv_scale);
    dr.omega = inv_scale.asDiagonal() * dr.omega * inv_scale.asDiagonal();
    dr.se = dr.se.cwiseProduct(inv_scale);
    Vector beta_orig = cv.fit.beta_hat.cwiseProduct(inv_scale);

    const auto cis = confidence_intervals(dr, args.alpha);
    io::TauReport tr;
    tr.tau = tau_value;
    tr.lambda = cv.lambda_star;
    tr.nodewise_lambda = pe.lambdas(0);
    for (Index j = 0; j < data.p(); ++j) {
      io::CoefficientReport cr;
      cr.name = names[static_cast<std::size_t>(j)];
      cr.beta = beta_orig(j);
      cr.beta_de = dr.beta_de(j);
      cr.se = dr.se(j);
      cr.degenerate = cis[static_cast<std::size_t>(j)].degenerate;
      cr.z = cr.degenerate ? 0.0 : dr.beta_de(j) / dr.se(j);
      cr.p_value = cr.degenerate ? 1.0 : 2.0 * (1.0 - normal_cdf(std::abs(cr.z)));
      cr.ci_lower = cis[static_cast<std::size_t>(j)].lower;
      cr.ci_upper = cis[static_cast<std::size_t>(j)].upper;
      tr.coefficients.push_back(std::move(cr));
    }
    if (r_matrix.rows() > 0) {
      const WaldTest wt = wald_test(dr, r_matrix, c_vector);
      io::GroupTestReport gr;
      gr.label = test_label;
      gr.statistic = wt.statistic;
      gr.df = wt.df;
      gr.p_value = wt.p_value;
      gr.reject = wt.p_value < args.alpha;
      tr.tests.push_back(std::move(gr));
    }
    report.taus.push_back(std::move(tr));
  }

  const std::string prefix = args.out_prefix.empty() ? stem_of(args.input) + ".report"
                                                     : args.out_prefix;
  io::write_analyze_json(prefix + ".json", report);
  io::write_analyze_csv(prefix + ".csv", report);
  std::cout << "wrote " << prefix << ".json and " << prefix << ".csv\n";
  return 0;
}

struct SimulateArgs {
  std::string config;
  std::string out_prefix;
  int replicates_override = -1;
  long long seed_override = -1;
  int threads = 1;
  int failure_budget = 0;
};

int run_simulate(const SimulateArgs& args) {
  io::StudyFile sf = io::read_study_config(args.config);
  if (args.replicates_override > 0) sf.config.replicates = args.replicates_override;
  if (args.seed_override >= 0) sf.config.seed = static_cast<std::uint64_t>(args.seed_override);
  sf.config.validate();

  const auto results = run_study_grid(sf.config, sf.k_values, args.threads,
                                      args.failure_budget);
  const std::string prefix =
      args.out_prefix.empty() ? stem_of(args.config) : args.out_prefix;
  io::write_study_csv(prefix + ".csv", results, sf.k_values);
  io::write_study_json(prefix + ".json", results, sf.k_values);

  double total_time = 0.0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    std::cout << "k=" << sf.k_values[i] << "  rejection_rate=" << results[i].rejection_rate
              << "  failures=" << results[i].failures << "\n";
    total_time += results[i].wall_time_seconds;
  }
  std::cerr << "total study time: " << total_time << " s\n";
  std::cout << "wrote " << prefix << ".csv and " << prefix << ".json\n";
  return 0;
}

struct CvArgs {
  std::string input;
  std::string y_name;
  double tau = 0.5;
  std::string method = "la-la";
  std::string out;
  int folds = 10;
  std::uint64_t seed = 0;
  bool no_standardize = false;
};

int run_cv(const CvArgs& args) {
  const io::CsvTable table = io::read_csv(args.input);
  const Index ycol = table.column(args.y_name);
  const Index p = table.values.cols() - 1;
  if (p < 1) throw DataError("need at least one covariate column besides the response");
  Matrix x(table.values.rows(), p);
  Index j = 0;
  for (Index c = 0; c < table.values.cols(); ++c) {
    if (c != ycol) x.col(j++) = table.values.col(c);
  }
  standardize_columns(x, !args.no_standardize);
  const Dataset data(std::move(x), table.values.col(ycol));
  if (args.method != "la-la" && args.method != "sc-sc") {
    throw DataError("method must be 'la-la' or 'sc-sc', got '" + args.method + "'");
  }
  const PenaltyKind kind = args.method == "sc-sc" ? PenaltyKind::scad : PenaltyKind::lasso;
  SolverOptions sopts;
  if (kind == PenaltyKind::scad) sopts.lla_stages = 3;
  const CvResult cv = cross_validate(data, ExpectileLevel(args.tau), kind, {}, args.folds,
                                     args.seed, sopts);
  const std::string out = args.out.empty() ? stem_of(args.input) + ".cv.csv" : args.out;
  io::write_cv_csv(out, cv.cv_table, cv.lambda_star);
  std::cout << "lambda_star=" << cv.lambda_star << "  wrote " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"De-biased inference for high-dimensional expectile regression"};
  app.require_subcommand(1);

  AnalyzeArgs aa;
  auto* analyze = app.add_subcommand("analyze", "Fit, de-bias and test on a CSV dataset");
  analyze->add_option("--input", aa.input, "input CSV file")->required();
  analyze->add_option("--y", aa.y_name, "response column name")->required();
  analyze->add_option("--tau", aa.tau_spec, "comma list of expectile levels (default 0.5)");
  analyze->add_option("--method", aa.method, "la-la or sc-sc (default la-la)");
  analyze->add_option("--test", aa.test_spec, "comma list of columns for a group test H0: beta=0");
  analyze->add_option("--test-file", aa.test_file, "JSON file with an explicit {R, c} block");
  analyze->add_option("--alpha", aa.alpha, "test level (default 0.05)");
  analyze->add_option("--out", aa.out_prefix, "output prefix (default <input>.report)");
  analyze->add_option("--seed", aa.seed, "seed for CV folds (default 0)");
  analyze->add_option("--threads", aa.threads, "worker threads (default 1)");
  analyze->add_option("--folds", aa.folds, "CV folds (default 10)");
  analyze->add_flag("--no-standardize", aa.no_standardize,
                    "fit on raw columns instead of centered/unit-variance columns");

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "Run a Monte Carlo study from a config file");
  simulate->add_option("--config", sa.config, "study config file")->required();
  simulate->add_option("--out", sa.out_prefix, "output prefix (default config stem)");
  simulate->add_option("--replicates", sa.replicates_override, "override replicate count");
  simulate->add_option("--seed", sa.seed_override, "override seed");
  simulate->add_option("--threads", sa.threads, "worker threads (default 1)");
  simulate->add_option("--failure-budget", sa.failure_budget,
                       "tolerated replicate failures (default 0)");

  CvArgs ca;
  auto* cv = app.add_subcommand("cv", "Cross-validate lambda on a CSV dataset");
  cv->add_option("--input", ca.input, "input CSV file")->required();
  cv->add_option("--y", ca.y_name, "response column name")->required();
  cv->add_option("--tau", ca.tau, "expectile level (default 0.5)");
  cv->add_option("--method", ca.method, "la-la or sc-sc (default la-la)");
  cv->add_option("--folds", ca.folds, "CV folds (default 10)");
  cv->add_option("--seed", ca.seed, "seed for fold assignment (default 0)");
  cv->add_option("--out", ca.out, "output CSV (default <input>.cv.csv)");
  cv->add_flag("--no-standardize", ca.no_standardize, "fit on raw columns");

  auto* version = app.add_subcommand("version", "Print the version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*analyze) return run_analyze(aa);
    if (*simulate) return run_simulate(sa);
    if (*cv) return run_cv(ca);
    if (*version) {
      std::cout << "expinf " << kVersion << "\n";
      return 0;
    }
  } catch (const expinf::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const expinf::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
