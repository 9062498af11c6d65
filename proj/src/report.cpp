#include "expinf/io/report.hpp"

#include <fstream>

#include <json.hpp>

#include "expinf/errors.hpp"
#include "expinf/io/csv.hpp"

namespace expinf::io {

namespace {

using nlohmann::json;

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open output file: " + path);
  return out;
}

std::string cov_name(const CovarianceDesign& d) {
  return d.kind == CovarianceDesign::Kind::toeplitz ? "toeplitz" : "scalefree";
}

double cov_param(const CovarianceDesign& d) {
  return d.kind == CovarianceDesign::Kind::toeplitz ? d.xi
                                                    : static_cast<double>(d.varsigma);
}

std::string pattern_name(const CoefficientPattern& p) {
  switch (p.kind) {
    case CoefficientPattern::Kind::dirac4: return "dirac4";
    case CoefficientPattern::Kind::dirac10: return "dirac10";
    case CoefficientPattern::Kind::unif4: return "unif4";
    default: return "unif10";
  }
}

json config_json(const StudyConfig& cfg) {
  json j;
  j["n"] = cfg.n;
  j["p"] = cfg.p;
  j["tau"] = cfg.tau;
  j["cov"] = cov_name(cfg.cov);
  j["cov_param"] = cov_param(cfg.cov);
  j["pattern"] = pattern_name(cfg.pattern);
  j["error"] = cfg.error == ErrorDist::std_normal ? "normal" : "t4";
  j["dgp"] = cfg.dgp == Dgp::homoscedastic ? "homoscedastic" : "heteroscedastic";
  j["method"] = cfg.method == StudyMethod::la_la ? "la-la" : "sc-sc";
  j["alpha"] = cfg.alpha;
  j["replicates"] = cfg.replicates;
  j["seed"] = cfg.seed;
  j["noise_scale"] = cfg.noise_scale;
  j["cv_folds"] = cfg.cv_folds;
  j["nodewise_max_columns"] = cfg.nodewise_max_columns;
  if (!cfg.hypothesis.coords.empty()) {
    std::vector<Index> one_based;
    for (Index c : cfg.hypothesis.coords) one_based.push_back(c + 1);
    j["test_coordinates"] = one_based;
  } else {
    j["test_rows"] = cfg.hypothesis.r_matrix.rows();
  }
  return j;
}

}  // namespace

void write_analyze_json(const std::string& path, const AnalyzeReport& report) {
  json j;
  j["input"] = report.input;
  j["response"] = report.response;
  j["standardized"] = report.standardized;
  j["method"] = report.method;
  j["alpha"] = report.alpha;
  j["seed"] = report.seed;
  j["results"] = json::array();
  for (const auto& tr : report.taus) {
    json jt;
    jt["tau"] = tr.tau;
    jt["lambda"] = tr.lambda;
    jt["nodewise_lambda"] = tr.nodewise_lambda;
    jt["coefficients"] = json::array();
    for (const auto& c : tr.coefficients) {
      json jc;
      jc["name"] = c.name;
      jc["beta"] = c.beta;
      jc["beta_debiased"] = c.beta_de;
      jc["se"] = c.se;
      jc["z"] = c.z;
      jc["p_value"] = c.p_value;
      jc["ci_lower"] = c.ci_lower;
      jc["ci_upper"] = c.ci_upper;
      jc["degenerate"] = c.degenerate;
      jt["coefficients"].push_back(std::move(jc));
    }
    jt["tests"] = json::array();
    for (const auto& g : tr.tests) {
      json jg;
      jg["hypothesis"] = g.label;
      jg["statistic"] = g.statistic;
      jg["df"] = g.df;
      jg["p_value"] = g.p_value;
      jg["reject"] = g.reject;
      jt["tests"].push_back(std::move(jg));
    }
    j["results"].push_back(std::move(jt));
  }
  auto out = open_out(path);
  out << j.dump(2) << "\n";
}

void write_analyze_csv(const std::string& path, const AnalyzeReport& report) {
  auto out = open_out(path);
  out << "tau,coefficient,beta,beta_debiased,se,z,p_value,ci_lower,ci_upper,degenerate\n";
  for (const auto& tr : report.taus) {
    for (const auto& c : tr.coefficients) {
      out << format_double(tr.tau) << ',' << c.name << ',' << format_double(c.beta) << ','
          << format_double(c.beta_de) << ',' << format_double(c.se) << ','
          << format_double(c.z) << ',' << format_double(c.p_value) << ','
          << format_double(c.ci_lower) << ',' << format_double(c.ci_upper) << ','
          << (c.degenerate ? 1 : 0) << "\n";
    }
  }
}

void write_study_csv(const std::string& path, const std::vector<StudyResult>& results,
                     const std::vector<double>& k_values) {
  if (results.size() != k_values.size() || results.empty()) {
    throw std::invalid_argument("write_study_csv: results and k grid differ in length");
  }
  auto out = open_out(path);
  const StudyConfig& cfg = results.front().config;
  out << "method,dgp,cov,cov_param,pattern,error,tau,n,p,alpha,replicates,seed";
  for (double k : k_values) out << ",k=" << format_double(k);
  out << "\n";
  out << (cfg.method == StudyMethod::la_la ? "la-la" : "sc-sc") << ','
      << (cfg.dgp == Dgp::homoscedastic ? "homoscedastic" : "heteroscedastic") << ','
      << cov_name(cfg.cov) << ',' << format_double(cov_param(cfg.cov)) << ','
      << pattern_name(cfg.pattern) << ','
      << (cfg.error == ErrorDist::std_normal ? "normal" : "t4") << ','
      << format_double(cfg.tau) << ',' << cfg.n << ',' << cfg.p << ','
      << format_double(cfg.alpha) << ',' << cfg.replicates << ',' << cfg.seed;
  for (const auto& r : results) out << ',' << format_double(r.rejection_rate);
  out << "\n";
}

void write_study_json(const std::string& path, const std::vector<StudyResult>& results,
                      const std::vector<double>& k_values) {
  if (results.size() != k_values.size() || results.empty()) {
    throw std::invalid_argument("write_study_json: results and k grid differ in length");
  }
  json j;
  j["config"] = config_json(results.front().config);
  j["studies"] = json::array();
  for (std::size_t i = 0; i < results.size(); ++i) {
    json js;
    js["k"] = k_values[i];
    js["rejection_rate"] = results[i].rejection_rate;
    js["failures"] = results[i].failures;
    js["replicates"] = json::array();
    for (const auto& rec : results[i].per_replicate) {
      json jr;
      jr["statistic"] = rec.statistic;
      jr["p_value"] = rec.p_value;
      jr["reject"] = rec.reject;
      jr["degenerate"] = rec.degenerate;
      jr["failed"] = rec.failed;
      js["replicates"].push_back(std::move(jr));
    }
    j["studies"].push_back(std::move(js));
  }
  auto out = open_out(path);
  out << j.dump(2) << "\n";
}

void write_cv_csv(const std::string& path, const std::vector<std::pair<double, double>>& table,
                  double lambda_star) {
  auto out = open_out(path);
  out << "lambda,mean_heldout_loss,selected\n";
  for (const auto& [lambda, loss] : table) {
    out << format_double(lambda) << ',' << format_double(loss) << ','
        << (lambda == lambda_star ? 1 : 0) << "\n";
  }
}

}  // namespace expinf::io
